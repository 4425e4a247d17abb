#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "shuttle/numerics/random.hpp"
#include "shuttle/tasks/sequence_batch.hpp"

namespace shuttle::tasks {

struct CopyTaskParams {
  std::size_t symbols = 8;
  std::size_t payload = 5;  // L
  std::size_t gap = 20;     // G
};

/// Copy task: L random symbols, G blanks, then the L symbols must be
/// reproduced on the L steps starting at the trigger marker.
///
/// Features are one-hot over symbols + blank + trigger (F = symbols + 2) and
/// sequences have T = 2L + G steps. Only the answer steps carry labels.
class CopyTask final : public SequenceSource {
 public:
  CopyTask(CopyTaskParams params, std::uint64_t seed);

  SequenceBatch next(std::size_t batch) override;
  TaskInfo info() const override;

  std::size_t steps() const { return 2 * params_.payload + params_.gap; }
  std::size_t feature_size() const { return params_.symbols + 2; }
  std::size_t answer_start() const { return params_.payload + params_.gap; }

 private:
  CopyTaskParams params_;
  Rng rng_;
};

struct AddingParams {
  std::size_t steps = 50;
};

/// Adding problem: channel 0 holds uniform(0, 1) values, channel 1 marks one
/// step in each half of the sequence; the target is the sum of the two marked values.
class AddingProblem final : public SequenceSource {
 public:
  AddingProblem(AddingParams params, std::uint64_t seed);

  SequenceBatch next(std::size_t batch) override;
  TaskInfo info() const override;

  /// One sequence with explicit values and marker positions.
  static SequenceBatch make_sequence(const std::vector<double>& values, std::size_t first, std::size_t second);

 private:
  AddingParams params_;
  Rng rng_;
};

struct NoisyClassificationParams {
  std::size_t classes = 4;
  std::size_t steps = 16;
  std::size_t features = 8;
  double noise = 1.0;
  std::uint64_t prototype_seed = 7;
};

/// Each class owns a fixed random [T x F] prototype; samples are the
/// prototype plus Gaussian noise. Labels cycle through the classes so every
/// run of `classes` consecutive sequences is balanced; every step carries the label.
class NoisyClassification final : public SequenceSource {
 public:
  NoisyClassification(NoisyClassificationParams params, std::uint64_t seed);

  SequenceBatch next(std::size_t batch) override;
  TaskInfo info() const override;

 private:
  NoisyClassificationParams params_;
  std::vector<Tensor> prototypes_;
  Rng rng_;
  std::size_t counter_ = 0;
};

}  // namespace shuttle::tasks
