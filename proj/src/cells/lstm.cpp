#include "shuttle/cells/lstm.hpp"

#include <cmath>

#include "shuttle/errors.hpp"
#include "shuttle/numerics/ops.hpp"

namespace shuttle::cells {

namespace {

constexpr const char* kGateNames[] = {"input", "forget", "cell", "output"};

LstmGate zero_gate(std::size_t in, std::size_t s) { return {Tensor({s, in}, 0.0), Tensor({s, s}, 0.0), Tensor({s}, 0.0)}; }

}  // namespace

LstmParams LstmParams::zeros(std::size_t in, std::size_t s) {
  return {zero_gate(in, s), zero_gate(in, s), zero_gate(in, s), zero_gate(in, s)};
}

LstmParams LstmParams::random(std::size_t in, std::size_t s, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(s));
  LstmParams p = zeros(in, s);
  for (LstmGate* g : {&p.input, &p.forget, &p.cell, &p.output}) {
    g->w = uniform_tensor(g->w.shape(), -r, r, rng);
    g->u = uniform_tensor(g->u.shape(), -r, r, rng);
  }
  p.forget.b.fill(1.0);
  return p;
}

void LstmParams::validate() const {
  if (input.w.rank() != 2) throw DimensionError("LSTM input weights must be a matrix");
  const std::size_t s = state_size();
  const std::size_t in = input_size();
  int i = 0;
  for (const LstmGate* g : {&input, &forget, &cell, &output}) {
    if (g->w.shape() != Shape{s, in} || g->u.shape() != Shape{s, s} || g->b.shape() != Shape{s}) {
      throw DimensionError(std::string("LSTM gate '") + kGateNames[i] + "' is not shaped for in=" +
                           std::to_string(in) + ", s=" + std::to_string(s));
    }
    ++i;
  }
}

void LstmParams::register_into(ParamStore& store, const std::string& prefix) const {
  validate();
  int i = 0;
  for (const LstmGate* g : {&input, &forget, &cell, &output}) {
    const std::string base = prefix + "/" + kGateNames[i++];
    store.add(base + "/W", g->w);
    store.add(base + "/U", g->u);
    store.add(base + "/b", g->b);
  }
}

LstmVars LstmVars::bind(Tape& tape, ParamStore& store, const std::string& prefix) {
  auto gate = [&](const char* name) {
    const std::string base = prefix + "/" + name;
    return LstmGateVars{tape.param(store, base + "/W"), tape.param(store, base + "/U"), tape.param(store, base + "/b")};
  };
  return {gate("input"), gate("forget"), gate("cell"), gate("output")};
}

LstmVars LstmVars::constants(Tape& tape, const LstmParams& p) {
  p.validate();
  auto gate = [&](const LstmGate& g) { return LstmGateVars{tape.constant(g.w), tape.constant(g.u), tape.constant(g.b)}; };
  return {gate(p.input), gate(p.forget), gate(p.cell), gate(p.output)};
}

LstmOutput lstm_step(const LstmVars& p, const Var& x, const LstmState& state) {
  const Shape& ws = p.input.w.shape();
  const Shape& xs = x.shape();
  const Shape& hs = state.h.shape();
  if (xs.size() != 2 || hs.size() != 2 || xs[0] != hs[0] || xs[1] != ws[1] || hs[1] != ws[0] ||
      state.c.shape() != hs) {
    throw DimensionError("lstm_step: input " + to_string(xs) + " and state " + to_string(hs) +
                         " do not fit weights " + to_string(ws));
  }
  using namespace ops;
  auto pre = [&](const LstmGateVars& g) { return add_bias(add(matmul_bt(x, g.w), matmul_bt(state.h, g.u)), g.b); };
  const Var i = sigmoid(pre(p.input));
  const Var f = sigmoid(pre(p.forget));
  const Var g = ops::tanh(pre(p.cell));
  const Var o = sigmoid(pre(p.output));
  const Var c = add(mul(f, state.c), mul(i, g));
  const Var h = mul(o, ops::tanh(c));
  return {h, {h, c}};
}

std::size_t lstm_param_count(std::size_t in, std::size_t s) { return 4 * (in * s + s * s + s); }

}  // namespace shuttle::cells
