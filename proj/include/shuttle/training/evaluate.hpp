#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "shuttle/tasks/sequence_batch.hpp"
#include "shuttle/training/model.hpp"

namespace shuttle::training {

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;                   // cross-entropy, or MSE for regression
  std::vector<double> per_class_accuracy;   // empty for regression; NaN for absent classes
  double attention_entropy = 0.0;
  std::size_t samples = 0;                  // sequences evaluated
  std::size_t scored = 0;                   // labelled steps (or sequences for regression)
};

/// Inference-mode pass over fixed batches. Deterministic for a given model.
EvalMetrics evaluate(Model& model, std::span<const tasks::SequenceBatch> data);

/// Draws `samples` sequences from `source` in batches of at most `batch`.
std::vector<tasks::SequenceBatch> draw_batches(tasks::SequenceSource& source, std::size_t samples, std::size_t batch);

}  // namespace shuttle::training
