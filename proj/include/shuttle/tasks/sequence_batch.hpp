#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "shuttle/numerics/tensor.hpp"

namespace shuttle::tasks {

/// B sequences of T steps with F features each.
///
/// Classification tasks label individual steps (`labels`, B x T row-major,
/// -1 where a step carries no target). Regression tasks carry one real
/// target per sequence, scored at the final step.
struct SequenceBatch {
  Tensor features;  // [B x T x F]
  std::vector<int> labels;
  std::vector<double> targets;
  std::string task;

  std::size_t batch() const { return features.dim(0); }
  std::size_t steps() const { return features.dim(1); }
  std::size_t feature_size() const { return features.dim(2); }
  bool regression() const { return !targets.empty(); }

  /// Features of time step t as a [B x F] matrix.
  Tensor step(std::size_t t) const;
  /// Labels of every sequence at time step t.
  std::vector<int> step_labels(std::size_t t) const;
  int label(std::size_t b, std::size_t t) const { return labels[b * steps() + t]; }

  void validate(std::size_t classes) const;
};

enum class LossKind {
  labelled_steps,  // mean cross-entropy over every labelled (sequence, step)
  final_step_mse,  // mean squared error of the final-step prediction
};

struct TaskInfo {
  std::string name;
  std::size_t feature_size = 0;
  std::size_t steps = 0;
  std::size_t classes = 0;  // 0 for regression
  LossKind loss = LossKind::labelled_steps;
};

/// Endless stream of batches.
class SequenceSource {
 public:
  virtual ~SequenceSource() = default;
  virtual SequenceBatch next(std::size_t batch) = 0;
  virtual TaskInfo info() const = 0;
};

}  // namespace shuttle::tasks
