#include "shuttle/verify/equivalence.hpp"

#include <algorithm>
#include <cmath>

#include "shuttle/errors.hpp"

namespace shuttle::verify {

namespace {

// Probe inputs and states: wider than typical activations so the gates leave their linear regime.
Tensor probe_tensor(Shape shape, Rng& rng) { return uniform_tensor(std::move(shape), -2.0, 2.0, rng); }

struct LayerProbe {
  layer::ShuttleConfig cfg;
  layer::ShuttleParams params;
  Tensor x;
  std::vector<Tensor> states;  // processor-major, step-minor
};

LayerProbe make_probe(std::size_t processors, std::size_t steps, std::size_t s, std::size_t batch, Rng& rng) {
  LayerProbe p;
  p.cfg = {processors, steps, 1, s, s, false};
  p.params = layer::ShuttleParams::random(p.cfg, rng);
  // Random biases too, so the comparison also covers the bias paths.
  for (auto& proc : p.params.processors) {
    for (Tensor* b : {&proc.bz, &proc.br, &proc.bh}) *b = probe_tensor(b->shape(), rng);
  }
  p.x = probe_tensor({batch, s}, rng);
  for (std::size_t i = 0; i < processors * steps; ++i) p.states.push_back(probe_tensor({batch, s}, rng));
  return p;
}

struct LayerResult {
  Tensor y;
  std::vector<Tensor> states;
};

LayerResult run_layer(const LayerProbe& p) {
  Tape tape;
  const auto vars = layer::ShuttleVars::constants(tape, p.params);
  std::vector<Var> states;
  for (const auto& t : p.states) states.push_back(tape.constant(t));
  const layer::StateGrid grid(p.cfg.processors, p.cfg.steps, std::move(states));
  const auto step = layer::shuttle_forward(vars, p.cfg, tape.constant(p.x), grid, layer::Mode::infer,
                                           layer::ProjectorStats::initial(p.cfg.state_size));
  LayerResult r{step.y.value(), {}};
  for (std::size_t n = 0; n < p.cfg.processors; ++n)
    for (std::size_t d = 1; d <= p.cfg.steps; ++d) r.states.push_back(step.grid.at(n, d).value());
  return r;
}

struct GruResult {
  Tensor output;
  Tensor state;
};

GruResult gru(const cells::GruParams& params, const Tensor& x, const Tensor& h) {
  Tape tape;
  const auto out = cells::gru_step(cells::GruVars::constants(tape, params), tape.constant(x), tape.constant(h));
  return {out.output.value(), out.state.value()};
}

double deviation(const LayerResult& got, const Tensor& y, const std::vector<Tensor>& states) {
  double dev = max_abs_diff(got.y, y);
  for (std::size_t i = 0; i < states.size(); ++i) dev = std::max(dev, max_abs_diff(got.states[i], states[i]));
  return dev;
}

}  // namespace

Tensor reference_attention(const layer::AttentionParams& a, const Tensor& x, std::span<const Tensor> outputs) {
  if (outputs.empty()) throw DimensionError("reference_attention: no outputs");
  const std::size_t batch = x.dim(0);
  const std::size_t s = x.dim(1);
  const std::size_t n_out = outputs.size();
  Tensor y({batch, s}, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> e(n_out, 0.0);
    for (std::size_t n = 0; n < n_out; ++n) {
      for (std::size_t i = 0; i < s; ++i) {
        double pre = 0.0;
        for (std::size_t j = 0; j < s; ++j) pre += a.w_x(i, j) * x(b, j) + a.w_o(i, j) * outputs[n](b, j);
        e[n] += a.nu[i] * std::tanh(pre);
      }
    }
    const double m = *std::max_element(e.begin(), e.end());
    double z = 0.0;
    for (double& v : e) z += (v = std::exp(v - m));
    for (std::size_t n = 0; n < n_out; ++n)
      for (std::size_t j = 0; j < s; ++j) y(b, j) += e[n] / z * outputs[n](b, j);
  }
  return y;
}

EquivalenceResult check_single_gru(std::size_t s, std::size_t batch, std::size_t probes, std::uint64_t seed) {
  Rng rng(seed);
  EquivalenceResult r{"N=1,D=1 vs single GRU", probes, 0.0};
  for (std::size_t k = 0; k < probes; ++k) {
    const auto p = make_probe(1, 1, s, batch, rng);
    const auto expect = gru(p.params.processors[0], p.x, p.states[0]);
    r.max_deviation = std::max(r.max_deviation, deviation(run_layer(p), expect.output, {expect.state}));
  }
  return r;
}

EquivalenceResult check_gru_bank(std::size_t processors, std::size_t s, std::size_t batch, std::size_t probes,
                                 std::uint64_t seed) {
  Rng rng(seed);
  EquivalenceResult r{"N=" + std::to_string(processors) + ",D=1 vs GRU bank + attention", probes, 0.0};
  for (std::size_t k = 0; k < probes; ++k) {
    const auto p = make_probe(processors, 1, s, batch, rng);
    std::vector<Tensor> outputs;
    std::vector<Tensor> states;
    for (std::size_t n = 0; n < processors; ++n) {
      const auto o = gru(p.params.processors[n], p.x, p.states[n]);
      outputs.push_back(o.output);
      states.push_back(o.state);
    }
    const Tensor y = reference_attention(p.params.attention, p.x, outputs);
    r.max_deviation = std::max(r.max_deviation, deviation(run_layer(p), y, states));
  }
  return r;
}

EquivalenceResult check_shared_stack(std::size_t steps, std::size_t s, std::size_t batch, std::size_t probes,
                                     std::uint64_t seed) {
  Rng rng(seed);
  EquivalenceResult r{"N=1,D=" + std::to_string(steps) + " vs weight-shared stacked GRU", probes, 0.0};
  for (std::size_t k = 0; k < probes; ++k) {
    const auto p = make_probe(1, steps, s, batch, rng);
    Tensor level_input = p.x;
    std::vector<Tensor> states;
    for (std::size_t d = 0; d < steps; ++d) {
      const auto o = gru(p.params.processors[0], level_input, p.states[d]);
      states.push_back(o.state);
      level_input = o.output;
    }
    r.max_deviation = std::max(r.max_deviation, deviation(run_layer(p), level_input, states));
  }
  return r;
}

}  // namespace shuttle::verify
