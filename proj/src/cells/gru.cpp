#include "shuttle/cells/gru.hpp"

#include <cmath>

#include "shuttle/errors.hpp"
#include "shuttle/numerics/ops.hpp"

namespace shuttle::cells {

namespace {

void expect_shape(const Tensor& t, const Shape& shape, const char* name) {
  if (t.shape() != shape) {
    throw DimensionError(std::string("GRU parameter ") + name + " has shape " + to_string(t.shape()) +
                         ", expected " + to_string(shape));
  }
}

}  // namespace

GruParams GruParams::zeros(std::size_t in, std::size_t s) {
  Tensor w({s, in}, 0.0);
  Tensor u({s, s}, 0.0);
  Tensor b({s}, 0.0);
  return {w, w, w, u, u, u, b, b, b};
}

GruParams GruParams::random(std::size_t in, std::size_t s, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(s));
  GruParams p = zeros(in, s);
  for (Tensor* t : {&p.wz, &p.wr, &p.wh, &p.uz, &p.ur, &p.uh}) *t = uniform_tensor(t->shape(), -r, r, rng);
  return p;
}

void GruParams::validate() const {
  if (wz.rank() != 2) throw DimensionError("GRU parameter Wz must be a matrix, got " + to_string(wz.shape()));
  const std::size_t s = wz.dim(0);
  const std::size_t in = wz.dim(1);
  expect_shape(wr, {s, in}, "Wr");
  expect_shape(wh, {s, in}, "Wh");
  expect_shape(uz, {s, s}, "Uz");
  expect_shape(ur, {s, s}, "Ur");
  expect_shape(uh, {s, s}, "Uh");
  expect_shape(bz, {s}, "bz");
  expect_shape(br, {s}, "br");
  expect_shape(bh, {s}, "bh");
}

void GruParams::register_into(ParamStore& store, const std::string& prefix) const {
  validate();
  store.add(prefix + "/Wz", wz);
  store.add(prefix + "/Wr", wr);
  store.add(prefix + "/Wh", wh);
  store.add(prefix + "/Uz", uz);
  store.add(prefix + "/Ur", ur);
  store.add(prefix + "/Uh", uh);
  store.add(prefix + "/bz", bz);
  store.add(prefix + "/br", br);
  store.add(prefix + "/bh", bh);
}

GruVars GruVars::bind(Tape& tape, ParamStore& store, const std::string& prefix) {
  auto p = [&](const char* n) { return tape.param(store, prefix + "/" + n); };
  return {p("Wz"), p("Wr"), p("Wh"), p("Uz"), p("Ur"), p("Uh"), p("bz"), p("br"), p("bh")};
}

GruVars GruVars::constants(Tape& tape, const GruParams& p) {
  p.validate();
  auto c = [&](const Tensor& t) { return tape.constant(t); };
  return {c(p.wz), c(p.wr), c(p.wh), c(p.uz), c(p.ur), c(p.uh), c(p.bz), c(p.br), c(p.bh)};
}

GruOutput gru_step(const GruVars& p, const Var& x, const Var& h) {
  const Shape& ws = p.wz.shape();
  const Shape& xs = x.shape();
  const Shape& hs = h.shape();
  if (xs.size() != 2 || hs.size() != 2 || xs[0] != hs[0] || xs[1] != ws[1] || hs[1] != ws[0]) {
    throw DimensionError("gru_step: input " + to_string(xs) + " and state " + to_string(hs) +
                         " do not fit weights " + to_string(ws));
  }
  using namespace ops;
  const Var z = sigmoid(add_bias(add(matmul_bt(x, p.wz), matmul_bt(h, p.uz)), p.bz));
  const Var r = sigmoid(add_bias(add(matmul_bt(x, p.wr), matmul_bt(h, p.ur)), p.br));
  const Var candidate = ops::tanh(add_bias(add(matmul_bt(x, p.wh), matmul_bt(mul(r, h), p.uh)), p.bh));
  // (1 - z) * h + z * c, written as h + z * (c - h)
  const Var next = add(h, mul(z, sub(candidate, h)));
  return {next, next};
}

std::size_t gru_param_count(std::size_t in, std::size_t s) { return 3 * (in * s + s * s + s); }

}  // namespace shuttle::cells
