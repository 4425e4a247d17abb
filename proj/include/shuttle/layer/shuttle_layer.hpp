#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shuttle/cells/gru.hpp"
#include "shuttle/numerics/ops.hpp"
#include "shuttle/numerics/param_store.hpp"
#include "shuttle/numerics/random.hpp"
#include "shuttle/numerics/tape.hpp"

namespace shuttle::layer {

/// Hyperparameters of one shuttle layer.
///
/// `processors` GRUs are arranged in a ring; each time step runs `steps`
/// applications per pathway, handing outputs to the processor `stride`
/// positions further along. Without the projector the raw features feed the
/// processors directly, so `input_size` must equal `state_size`.
struct ShuttleConfig {
  std::size_t processors = 1;
  std::size_t steps = 1;
  std::size_t stride = 1;
  std::size_t input_size = 1;
  std::size_t state_size = 1;
  bool projector = true;

  void validate() const;
};

enum class Mode { train, infer };

/// Fully-connected projection followed by batch normalization and ReLU.
struct ProjectorParams {
  Tensor weight;  // [s x F]
  Tensor bias;    // [s]

  static ProjectorParams random(std::size_t input_size, std::size_t state_size, Rng& rng);
};

/// Inference-time normalization statistics, tracked as an exponential moving average.
struct ProjectorStats {
  Tensor mean;
  Tensor variance;
  double eps = 1e-5;
  double momentum = 0.99;

  static ProjectorStats initial(std::size_t state_size);
  // running <- momentum * running + (1 - momentum) * batch
  void update(const Tensor& batch_mean, const Tensor& batch_variance);
};

/// Additive attention over the pathway outputs: e_n = nu . tanh(Wx x + Wo o_n).
struct AttentionParams {
  Tensor nu;   // [s]
  Tensor w_x;  // [s x s]
  Tensor w_o;  // [s x s]

  static AttentionParams zeros(std::size_t state_size);
  static AttentionParams random(std::size_t state_size, Rng& rng);
};

struct ShuttleParams {
  std::optional<ProjectorParams> projector;
  std::vector<cells::GruParams> processors;
  AttentionParams attention;

  static ShuttleParams zeros(const ShuttleConfig& cfg);
  static ShuttleParams random(const ShuttleConfig& cfg, Rng& rng);

  void register_into(ParamStore& store, const std::string& prefix) const;
};

struct ProjectorVars {
  Var weight;
  Var bias;
};

struct AttentionVars {
  Var nu;
  Var w_x;
  Var w_o;
};

struct ShuttleVars {
  std::optional<ProjectorVars> projector;
  std::vector<cells::GruVars> processors;
  AttentionVars attention;

  static ShuttleVars bind(Tape& tape, ParamStore& store, const std::string& prefix, const ShuttleConfig& cfg);
  static ShuttleVars constants(Tape& tape, const ShuttleParams& params);
};

/// The N x D standalone states h[n][d]; step indices are 1-based.
class StateGrid {
 public:
  StateGrid(std::size_t processors, std::size_t steps, std::vector<Var> states);

  static StateGrid zeros(Tape& tape, const ShuttleConfig& cfg, std::size_t batch);

  const Var& at(std::size_t processor, std::size_t step) const;
  Var& at(std::size_t processor, std::size_t step);

  std::size_t processors() const { return processors_; }
  std::size_t steps() const { return steps_; }

 private:
  std::size_t index(std::size_t processor, std::size_t step) const;

  std::size_t processors_;
  std::size_t steps_;
  std::vector<Var> states_;
};

/// Processor applied at (1-based) step `step` of pathway `pathway`:
/// (pathway + (step - 1) * stride) mod processors.
std::size_t pathway_processor_index(std::size_t pathway, std::size_t step, const ShuttleConfig& cfg);

struct Projection {
  Var out;
  // Batch statistics, present in train mode.
  std::optional<Tensor> batch_mean;
  std::optional<Tensor> batch_variance;
};

Projection project_input(const ProjectorVars& p, const Var& x, Mode mode, const ProjectorStats& stats);

struct LoopResult {
  std::vector<Var> outputs;  // o_n at the last step, indexed by processor
  StateGrid grid;
};

LoopResult loop_step(std::span<const cells::GruVars> processors, const ShuttleConfig& cfg, const StateGrid& grid,
                     const Var& x_proj);

struct Selection {
  Var y;
  Var alpha;  // [B x N]
};

Selection select_output(const AttentionVars& a, const Var& x_proj, std::span<const Var> outputs);

struct ShuttleStep {
  Var y;
  Var alpha;
  Var x_proj;
  StateGrid grid;
  Projection projection;
};

ShuttleStep shuttle_forward(const ShuttleVars& vars, const ShuttleConfig& cfg, const Var& x, const StateGrid& grid,
                            Mode mode, const ProjectorStats& stats);

/// Loop core and selector on an already projected input.
ShuttleStep shuttle_core(const ShuttleVars& vars, const ShuttleConfig& cfg, const Var& x_proj, const StateGrid& grid);

struct ParamBreakdown {
  std::size_t projector = 0;
  std::size_t processors = 0;
  std::size_t attention = 0;
  std::size_t total = 0;
  std::size_t running_stats = 0;  // non-trainable, excluded from total
};

ParamBreakdown shuttle_param_count(const ShuttleConfig& cfg);

}  // namespace shuttle::layer
