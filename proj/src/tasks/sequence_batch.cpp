#include "shuttle/tasks/sequence_batch.hpp"

#include "shuttle/errors.hpp"

namespace shuttle::tasks {

Tensor SequenceBatch::step(std::size_t t) const {
  if (t >= steps()) throw ContractError("step " + std::to_string(t) + " outside sequence of " + std::to_string(steps()));
  const std::size_t b = batch();
  const std::size_t f = feature_size();
  Tensor out({b, f});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < f; ++k) out(i, k) = features(i, t, k);
  return out;
}

std::vector<int> SequenceBatch::step_labels(std::size_t t) const {
  std::vector<int> out(batch(), -1);
  if (labels.empty()) return out;
  for (std::size_t i = 0; i < batch(); ++i) out[i] = label(i, t);
  return out;
}

void SequenceBatch::validate(std::size_t classes) const {
  if (features.rank() != 3) throw DimensionError("sequence batch features must be [B x T x F], got " + to_string(features.shape()));
  if (regression()) {
    if (targets.size() != batch()) throw DimensionError("sequence batch: " + std::to_string(targets.size()) + " targets for " + std::to_string(batch()) + " sequences");
    return;
  }
  if (labels.size() != batch() * steps()) {
    throw DimensionError("sequence batch: " + std::to_string(labels.size()) + " labels for " + std::to_string(batch()) + "x" + std::to_string(steps()) + " steps");
  }
  for (int y : labels) {
    if (y < -1 || (y >= 0 && static_cast<std::size_t>(y) >= classes)) {
      throw ContractError("sequence batch: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace shuttle::tasks
