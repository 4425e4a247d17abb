#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "shuttle/tasks/sequence_batch.hpp"
#include "shuttle/training/model.hpp"
#include "shuttle/training/optimizer.hpp"

namespace shuttle::training {

struct TrainConfig {
  OptimizerSettings optimizer;
  double initial_lr = 0.01;
  std::vector<std::size_t> decay_steps;  // iterations at which lr is multiplied by decay_factor
  double decay_factor = 0.1;
  std::size_t max_iters = 1000;
  std::size_t batch_size = 16;
  std::optional<double> grad_clip_norm;

  void validate() const;
};

/// Decay points at 1/4, 1/2 and 3/4 of the run, the proportions of a
/// 10K/20K/30K schedule over 40K iterations.
std::vector<std::size_t> proportional_decay_steps(std::size_t max_iters);

double learning_rate(const TrainConfig& cfg, std::size_t iteration);

struct LogRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
  double wall_ms = 0.0;
  double attention_entropy = 0.0;
};

struct TrainLog {
  std::vector<LogRow> rows;
  bool stopped_early = false;
};

void write_log_csv(std::ostream& out, const TrainLog& log);

/// Called every `every` iterations with the number of completed iterations;
/// returning true stops training.
struct TrainHook {
  std::size_t every = 0;
  std::function<bool(std::size_t completed, Model& model)> callback;
};

/// Backpropagation through time over batches drawn from `data`. Each
/// iteration unrolls the whole sequence, backpropagates the task loss,
/// optionally clips, and applies the optimizer at the scheduled rate.
/// Throws NumericalError when the loss or a gradient stops being finite.
TrainLog train(Model& model, tasks::SequenceSource& data, const TrainConfig& cfg, const TrainHook& hook = {});

}  // namespace shuttle::training
