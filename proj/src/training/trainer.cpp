#include "shuttle/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include "shuttle/errors.hpp"

namespace shuttle::training {

void TrainConfig::validate() const {
  if (!(initial_lr >= 0.0)) throw ContractError("learning rate must be >= 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) throw ContractError("momentum must lie in [0, 1)");
  if (!(decay_factor > 0.0)) throw ContractError("decay_factor must be > 0");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  for (std::size_t i = 1; i < decay_steps.size(); ++i) {
    if (decay_steps[i] <= decay_steps[i - 1]) throw ContractError("decay_steps must be strictly increasing");
  }
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw ContractError("grad_clip_norm must be > 0");
}

std::vector<std::size_t> proportional_decay_steps(std::size_t max_iters) {
  std::vector<std::size_t> out;
  for (std::size_t q = 1; q <= 3; ++q) {
    const std::size_t at = max_iters * q / 4;
    if (at > 0 && (out.empty() || at > out.back())) out.push_back(at);
  }
  return out;
}

double learning_rate(const TrainConfig& cfg, std::size_t iteration) {
  double lr = cfg.initial_lr;
  for (std::size_t at : cfg.decay_steps) {
    if (iteration >= at) lr *= cfg.decay_factor;
  }
  return lr;
}

void write_log_csv(std::ostream& out, const TrainLog& log) {
  out << "iteration,lr,loss,accuracy,wall_ms,attention_entropy\n";
  out.precision(17);
  for (const auto& r : log.rows) {
    out << r.iteration << ',' << r.lr << ',' << r.loss << ',' << r.accuracy << ',' << r.wall_ms << ','
        << r.attention_entropy << '\n';
  }
}

TrainLog train(Model& model, tasks::SequenceSource& data, const TrainConfig& cfg, const TrainHook& hook) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  Optimizer optimizer(cfg.optimizer, model.params());
  TrainLog log;
  const auto start = Clock::now();
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const tasks::SequenceBatch batch = data.next(cfg.batch_size);
    ParamStore& params = model.params();
    params.zero_grad();

    Tape tape;
    const SequenceOutput out = model.forward(tape, batch, layer::Mode::train);
    const Var loss = sequence_loss(out, batch);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) {
      const auto culprit = tape.first_non_finite();
      throw NumericalError("non-finite loss at iteration " + std::to_string(it) +
                           "; first non-finite tensor: " + culprit.value_or("none found"));
    }
    tape.backward(loss);
    for (const auto& e : params) {
      if (!e.grad.all_finite()) {
        throw NumericalError("non-finite gradient for '" + e.name + "' at iteration " + std::to_string(it));
      }
    }
    model.commit_statistics(out);
    if (cfg.grad_clip_norm) clip_global_norm(params, *cfg.grad_clip_norm);

    const double lr = learning_rate(cfg, it);
    optimizer.step(params, lr);

    const StepScore sc = score(out, batch);
    LogRow row;
    row.iteration = it;
    row.lr = lr;
    row.loss = loss_value;
    row.accuracy = sc.total ? static_cast<double>(sc.correct) / static_cast<double>(sc.total) : 0.0;
    row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    row.attention_entropy = attention_entropy(out);
    log.rows.push_back(row);

    if (hook.every > 0 && hook.callback && (it + 1) % hook.every == 0 && hook.callback(it + 1, model)) {
      log.stopped_early = true;
      break;
    }
  }
  return log;
}

}  // namespace shuttle::training
