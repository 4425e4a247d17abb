#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shuttle/cells/param_count.hpp"
#include "shuttle/layer/shuttle_layer.hpp"
#include "shuttle/numerics/param_store.hpp"
#include "shuttle/numerics/tape.hpp"
#include "shuttle/tasks/sequence_batch.hpp"

namespace shuttle::training {

enum class ModelKind { shuttle, gru, lstm };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);

/// Recurrent core plus a linear head. `outputs` is the class count for
/// classification tasks and 1 for regression.
struct ModelConfig {
  ModelKind kind = ModelKind::shuttle;
  layer::ShuttleConfig shuttle;
  std::size_t baseline_layers = 2;  // stacked depth of the gru/lstm baselines
  std::size_t outputs = 1;

  void validate() const;
};

/// Per-time-step results of running a model over a batch.
struct SequenceOutput {
  std::vector<std::optional<Var>> head;  // [B x outputs], only on steps that are scored
  std::vector<Var> alphas;               // attention masks (shuttle models only)
  std::vector<Tensor> batch_means;       // projector statistics over all frames, train mode only
  std::vector<Tensor> batch_variances;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  Model(ModelConfig cfg, ParamStore params, std::optional<layer::ProjectorStats> stats);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const std::optional<layer::ProjectorStats>& projector_stats() const { return stats_; }
  void set_projector_stats(layer::ProjectorStats stats) { stats_ = std::move(stats); }

  /// Unrolls the model over every time step. Head outputs are produced for
  /// steps that carry a label (classification) or the final step (regression).
  SequenceOutput forward(Tape& tape, const tasks::SequenceBatch& batch, layer::Mode mode);

  /// Folds the per-step batch statistics of a train-mode pass into the running averages.
  void commit_statistics(const SequenceOutput& out);

  std::size_t trainable_count() const { return params_.scalar_count(); }

 private:
  void build(std::uint64_t seed);

  ModelConfig cfg_;
  ParamStore params_;
  std::optional<layer::ProjectorStats> stats_;
};

/// Mean cross-entropy over labelled steps, or final-step MSE for regression.
Var sequence_loss(const SequenceOutput& out, const tasks::SequenceBatch& batch);

/// Mean entropy of the attention masks over rows and steps; 0 without attention.
double attention_entropy(const SequenceOutput& out);

struct StepScore {
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Counts correct predictions: argmax on labelled steps, or |pred - target| < 0.04 for regression.
StepScore score(const SequenceOutput& out, const tasks::SequenceBatch& batch);

inline constexpr double kRegressionHitTolerance = 0.04;

}  // namespace shuttle::training
