#include "shuttle/layer/shuttle_layer.hpp"

#include <cmath>

#include "shuttle/errors.hpp"

namespace shuttle::layer {

void ShuttleConfig::validate() const {
  if (processors < 1 || steps < 1 || stride < 1 || input_size < 1 || state_size < 1) {
    throw ContractError("shuttle config: processors, steps, stride and sizes must all be >= 1");
  }
  if (!projector && input_size != state_size) {
    throw ContractError("shuttle config: without the projector input_size (" + std::to_string(input_size) +
                        ") must equal state_size (" + std::to_string(state_size) + ")");
  }
}

ProjectorParams ProjectorParams::random(std::size_t input_size, std::size_t state_size, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(state_size));
  return {uniform_tensor({state_size, input_size}, -r, r, rng), Tensor({state_size}, 0.0)};
}

ProjectorStats ProjectorStats::initial(std::size_t state_size) {
  return {Tensor({state_size}, 0.0), Tensor({state_size}, 1.0)};
}

void ProjectorStats::update(const Tensor& batch_mean, const Tensor& batch_variance) {
  if (batch_mean.shape() != mean.shape() || batch_variance.shape() != variance.shape()) {
    throw DimensionError("projector statistics update: shape mismatch");
  }
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] = momentum * mean[i] + (1.0 - momentum) * batch_mean[i];
    variance[i] = momentum * variance[i] + (1.0 - momentum) * batch_variance[i];
  }
}

AttentionParams AttentionParams::zeros(std::size_t s) {
  return {Tensor({s}, 0.0), Tensor({s, s}, 0.0), Tensor({s, s}, 0.0)};
}

AttentionParams AttentionParams::random(std::size_t s, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(s));
  AttentionParams a;
  a.nu = uniform_tensor({s}, -r, r, rng);
  a.w_x = uniform_tensor({s, s}, -r, r, rng);
  a.w_o = uniform_tensor({s, s}, -r, r, rng);
  return a;
}

ShuttleParams ShuttleParams::zeros(const ShuttleConfig& cfg) {
  cfg.validate();
  ShuttleParams p;
  if (cfg.projector) {
    p.projector = ProjectorParams{Tensor({cfg.state_size, cfg.input_size}, 0.0), Tensor({cfg.state_size}, 0.0)};
  }
  p.processors.assign(cfg.processors, cells::GruParams::zeros(cfg.state_size, cfg.state_size));
  p.attention = AttentionParams::zeros(cfg.state_size);
  return p;
}

ShuttleParams ShuttleParams::random(const ShuttleConfig& cfg, Rng& rng) {
  cfg.validate();
  ShuttleParams p;
  if (cfg.projector) p.projector = ProjectorParams::random(cfg.input_size, cfg.state_size, rng);
  for (std::size_t n = 0; n < cfg.processors; ++n) {
    p.processors.push_back(cells::GruParams::random(cfg.state_size, cfg.state_size, rng));
  }
  p.attention = AttentionParams::random(cfg.state_size, rng);
  return p;
}

void ShuttleParams::register_into(ParamStore& store, const std::string& prefix) const {
  if (projector) {
    store.add(prefix + "/projector/w_p", projector->weight);
    store.add(prefix + "/projector/b", projector->bias);
  }
  for (std::size_t n = 0; n < processors.size(); ++n) {
    processors[n].register_into(store, prefix + "/proc" + std::to_string(n));
  }
  store.add(prefix + "/attention/nu", attention.nu);
  store.add(prefix + "/attention/w_x", attention.w_x);
  store.add(prefix + "/attention/w_o", attention.w_o);
}

ShuttleVars ShuttleVars::bind(Tape& tape, ParamStore& store, const std::string& prefix, const ShuttleConfig& cfg) {
  ShuttleVars v;
  if (cfg.projector) {
    v.projector = ProjectorVars{tape.param(store, prefix + "/projector/w_p"), tape.param(store, prefix + "/projector/b")};
  }
  for (std::size_t n = 0; n < cfg.processors; ++n) {
    v.processors.push_back(cells::GruVars::bind(tape, store, prefix + "/proc" + std::to_string(n)));
  }
  v.attention = {tape.param(store, prefix + "/attention/nu"), tape.param(store, prefix + "/attention/w_x"),
                 tape.param(store, prefix + "/attention/w_o")};
  return v;
}

ShuttleVars ShuttleVars::constants(Tape& tape, const ShuttleParams& params) {
  ShuttleVars v;
  if (params.projector) {
    v.projector = ProjectorVars{tape.constant(params.projector->weight), tape.constant(params.projector->bias)};
  }
  for (const auto& p : params.processors) v.processors.push_back(cells::GruVars::constants(tape, p));
  v.attention = {tape.constant(params.attention.nu), tape.constant(params.attention.w_x),
                 tape.constant(params.attention.w_o)};
  return v;
}

StateGrid::StateGrid(std::size_t processors, std::size_t steps, std::vector<Var> states)
    : processors_(processors), steps_(steps), states_(std::move(states)) {
  if (states_.size() != processors_ * steps_) {
    throw DimensionError("state grid: " + std::to_string(states_.size()) + " states for " +
                         std::to_string(processors_) + "x" + std::to_string(steps_) + " grid");
  }
}

StateGrid StateGrid::zeros(Tape& tape, const ShuttleConfig& cfg, std::size_t batch) {
  std::vector<Var> states;
  states.reserve(cfg.processors * cfg.steps);
  const Var zero = tape.constant(Tensor({batch, cfg.state_size}, 0.0));
  for (std::size_t i = 0; i < cfg.processors * cfg.steps; ++i) states.push_back(zero);
  return StateGrid(cfg.processors, cfg.steps, std::move(states));
}

std::size_t StateGrid::index(std::size_t processor, std::size_t step) const {
  if (processor >= processors_ || step < 1 || step > steps_) {
    throw ContractError("state grid: (" + std::to_string(processor) + ", " + std::to_string(step) +
                        ") outside " + std::to_string(processors_) + "x" + std::to_string(steps_));
  }
  return processor * steps_ + (step - 1);
}

const Var& StateGrid::at(std::size_t processor, std::size_t step) const { return states_[index(processor, step)]; }
Var& StateGrid::at(std::size_t processor, std::size_t step) { return states_[index(processor, step)]; }

std::size_t pathway_processor_index(std::size_t pathway, std::size_t step, const ShuttleConfig& cfg) {
  if (pathway >= cfg.processors || step < 1 || step > cfg.steps) {
    throw ContractError("pathway index: pathway " + std::to_string(pathway) + ", step " + std::to_string(step) +
                        " outside N=" + std::to_string(cfg.processors) + ", D=" + std::to_string(cfg.steps));
  }
  return (pathway + (step - 1) * cfg.stride) % cfg.processors;
}

Projection project_input(const ProjectorVars& p, const Var& x, Mode mode, const ProjectorStats& stats) {
  const Var pre = ops::matmul_bt(x, p.weight);
  Projection result;
  if (mode == Mode::train) {
    auto bn = ops::batch_norm_train(pre, p.bias, stats.eps);
    result.out = ops::relu(bn.out);
    result.batch_mean = std::move(bn.mean);
    result.batch_variance = std::move(bn.variance);
  } else {
    result.out = ops::relu(ops::batch_norm_infer(pre, p.bias, stats.mean, stats.variance, stats.eps));
  }
  return result;
}

LoopResult loop_step(std::span<const cells::GruVars> processors, const ShuttleConfig& cfg, const StateGrid& grid,
                     const Var& x_proj) {
  const std::size_t n_proc = cfg.processors;
  if (processors.size() != n_proc || grid.processors() != n_proc || grid.steps() != cfg.steps) {
    throw DimensionError("loop_step: " + std::to_string(processors.size()) + " processors and a " +
                         std::to_string(grid.processors()) + "x" + std::to_string(grid.steps()) +
                         " grid for N=" + std::to_string(n_proc) + ", D=" + std::to_string(cfg.steps));
  }
  StateGrid next = grid;
  std::vector<Var> previous;
  std::vector<Var> current(n_proc);
  for (std::size_t d = 1; d <= cfg.steps; ++d) {
    for (std::size_t n = 0; n < n_proc; ++n) {
      // Processor n continues the pathway that processor n - K carried at step d - 1.
      const Var& input = d == 1 ? x_proj : previous[(n + n_proc - cfg.stride % n_proc) % n_proc];
      const auto out = cells::gru_step(processors[n], input, grid.at(n, d));
      current[n] = out.output;
      next.at(n, d) = out.state;
    }
    previous = current;
  }
  return {std::move(current), std::move(next)};
}

Selection select_output(const AttentionVars& a, const Var& x_proj, std::span<const Var> outputs) {
  if (outputs.empty()) throw DimensionError("select_output: no pathway outputs");
  const std::size_t s = a.nu.value().size();
  const Var nu = ops::reshape(a.nu, {s, 1});
  const Var input_term = ops::matmul_bt(x_proj, a.w_x);
  std::vector<Var> scores;
  scores.reserve(outputs.size());
  for (const Var& o : outputs) {
    scores.push_back(ops::matmul(ops::tanh(ops::add(input_term, ops::matmul_bt(o, a.w_o))), nu));
  }
  const Var alpha = ops::softmax(ops::concat_cols(scores));
  Var y = ops::scale_rows(outputs[0], ops::column(alpha, 0));
  for (std::size_t n = 1; n < outputs.size(); ++n) {
    y = ops::add(y, ops::scale_rows(outputs[n], ops::column(alpha, n)));
  }
  return {y, alpha};
}

ShuttleStep shuttle_forward(const ShuttleVars& vars, const ShuttleConfig& cfg, const Var& x, const StateGrid& grid,
                            Mode mode, const ProjectorStats& stats) {
  Projection projection;
  if (cfg.projector) {
    if (!vars.projector) throw ContractError("shuttle_forward: config enables the projector but no weights were bound");
    projection = project_input(*vars.projector, x, mode, stats);
  } else {
    if (x.shape().size() != 2 || x.shape()[1] != cfg.state_size) {
      throw DimensionError("shuttle_forward: input " + to_string(x.shape()) + " must have state_size columns without the projector");
    }
    projection.out = x;
  }
  auto core = shuttle_core(vars, cfg, projection.out, grid);
  core.projection = std::move(projection);
  return core;
}

ShuttleStep shuttle_core(const ShuttleVars& vars, const ShuttleConfig& cfg, const Var& x_proj, const StateGrid& grid) {
  auto loop = loop_step(vars.processors, cfg, grid, x_proj);
  const auto sel = select_output(vars.attention, x_proj, loop.outputs);
  return {sel.y, sel.alpha, x_proj, std::move(loop.grid), Projection{x_proj, std::nullopt, std::nullopt}};
}

ParamBreakdown shuttle_param_count(const ShuttleConfig& cfg) {
  cfg.validate();
  const std::size_t s = cfg.state_size;
  ParamBreakdown b;
  if (cfg.projector) {
    b.projector = cfg.input_size * s + s;
    b.running_stats = 2 * s;
  }
  b.processors = cfg.processors * cells::gru_param_count(s, s);
  b.attention = 2 * s * s + s;
  b.total = b.projector + b.processors + b.attention;
  return b;
}

}  // namespace shuttle::layer
