#include "shuttle/tasks/generators.hpp"

#include "shuttle/errors.hpp"

namespace shuttle::tasks {

CopyTask::CopyTask(CopyTaskParams params, std::uint64_t seed) : params_(params), rng_(seed) {
  if (params_.payload < 1) throw ContractError("copy task: payload length must be >= 1");
  if (params_.symbols < 2) throw ContractError("copy task: need at least 2 symbols");
}

TaskInfo CopyTask::info() const {
  return {"copy", feature_size(), steps(), params_.symbols, LossKind::labelled_steps};
}

SequenceBatch CopyTask::next(std::size_t batch) {
  const std::size_t t_len = steps();
  const std::size_t f = feature_size();
  const std::size_t blank = params_.symbols;
  const std::size_t trigger = params_.symbols + 1;
  SequenceBatch out;
  out.task = "copy";
  out.features = Tensor({batch, t_len, f}, 0.0);
  out.labels.assign(batch * t_len, -1);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < params_.payload; ++i) {
      const std::size_t sym = rng_.index(params_.symbols);
      out.features(b, i, sym) = 1.0;
      out.labels[b * t_len + answer_start() + i] = static_cast<int>(sym);
    }
    for (std::size_t t = params_.payload; t < t_len; ++t) out.features(b, t, blank) = 1.0;
    out.features(b, answer_start(), blank) = 0.0;
    out.features(b, answer_start(), trigger) = 1.0;
  }
  return out;
}

AddingProblem::AddingProblem(AddingParams params, std::uint64_t seed) : params_(params), rng_(seed) {
  if (params_.steps < 2) throw ContractError("adding problem: sequence length must be >= 2");
}

TaskInfo AddingProblem::info() const { return {"adding", 2, params_.steps, 0, LossKind::final_step_mse}; }

SequenceBatch AddingProblem::next(std::size_t batch) {
  const std::size_t t_len = params_.steps;
  const std::size_t half = t_len / 2;
  SequenceBatch out;
  out.task = "adding";
  out.features = Tensor({batch, t_len, 2}, 0.0);
  out.targets.assign(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < t_len; ++t) out.features(b, t, 0) = rng_.uniform();
    const std::size_t first = rng_.index(half);
    const std::size_t second = half + rng_.index(t_len - half);
    out.features(b, first, 1) = 1.0;
    out.features(b, second, 1) = 1.0;
    out.targets[b] = out.features(b, first, 0) + out.features(b, second, 0);
  }
  return out;
}

SequenceBatch AddingProblem::make_sequence(const std::vector<double>& values, std::size_t first, std::size_t second) {
  const std::size_t t_len = values.size();
  if (t_len < 2 || first >= t_len || second >= t_len || first == second) {
    throw ContractError("adding problem: need two distinct marker positions inside the sequence");
  }
  SequenceBatch out;
  out.task = "adding";
  out.features = Tensor({1, t_len, 2}, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) out.features(0, t, 0) = values[t];
  out.features(0, first, 1) = 1.0;
  out.features(0, second, 1) = 1.0;
  out.targets = {values[first] + values[second]};
  return out;
}

NoisyClassification::NoisyClassification(NoisyClassificationParams params, std::uint64_t seed)
    : params_(params), rng_(seed) {
  if (params_.classes < 2 || params_.steps < 1 || params_.features < 1) {
    throw ContractError("noisy classification: need >= 2 classes and positive sizes");
  }
  Rng proto_rng(params_.prototype_seed);
  for (std::size_t c = 0; c < params_.classes; ++c) {
    prototypes_.push_back(normal_tensor({params_.steps, params_.features}, 1.0, proto_rng));
  }
}

TaskInfo NoisyClassification::info() const {
  return {"noisy", params_.features, params_.steps, params_.classes, LossKind::labelled_steps};
}

SequenceBatch NoisyClassification::next(std::size_t batch) {
  const std::size_t t_len = params_.steps;
  const std::size_t f = params_.features;
  SequenceBatch out;
  out.task = "noisy";
  out.features = Tensor({batch, t_len, f});
  out.labels.assign(batch * t_len, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t label = counter_++ % params_.classes;
    const Tensor& proto = prototypes_[label];
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t k = 0; k < f; ++k) out.features(b, t, k) = proto(t, k) + params_.noise * rng_.normal();
      out.labels[b * t_len + t] = static_cast<int>(label);
    }
  }
  return out;
}

}  // namespace shuttle::tasks
