#include "shuttle/training/model.hpp"

#include <algorithm>
#include <cmath>

#include "shuttle/cells/gru.hpp"
#include "shuttle/cells/lstm.hpp"
#include "shuttle/errors.hpp"
#include "shuttle/numerics/ops.hpp"

namespace shuttle::training {

namespace {

constexpr const char* kShuttlePrefix = "shuttle";
constexpr const char* kHeadWeight = "head/W";
constexpr const char* kHeadBias = "head/b";

std::string baseline_prefix(std::size_t layer) { return "rnn/layer" + std::to_string(layer); }

}  // namespace

ModelKind parse_model_kind(std::string_view name) {
  if (name == "shuttle") return ModelKind::shuttle;
  if (name == "gru") return ModelKind::gru;
  if (name == "lstm") return ModelKind::lstm;
  throw ContractError("unknown model kind '" + std::string(name) + "' (expected shuttle, gru or lstm)");
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::shuttle:
      return "shuttle";
    case ModelKind::gru:
      return "gru";
    case ModelKind::lstm:
      return "lstm";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (kind == ModelKind::shuttle) {
    shuttle.validate();
  } else if (shuttle.input_size < 1 || shuttle.state_size < 1) {
    throw ContractError("model: input and state sizes must be >= 1");
  }
  if (outputs < 1) throw ContractError("model: outputs must be >= 1");
  if (kind != ModelKind::shuttle && baseline_layers < 1) throw ContractError("model: baseline_layers must be >= 1");
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build(seed);
}

Model::Model(ModelConfig cfg, ParamStore params, std::optional<layer::ProjectorStats> stats)
    : cfg_(std::move(cfg)), params_(std::move(params)), stats_(std::move(stats)) {
  cfg_.validate();
  if (cfg_.kind == ModelKind::shuttle && cfg_.shuttle.projector && !stats_) {
    stats_ = layer::ProjectorStats::initial(cfg_.shuttle.state_size);
  }
}

void Model::build(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t s = cfg_.shuttle.state_size;
  switch (cfg_.kind) {
    case ModelKind::shuttle:
      layer::ShuttleParams::random(cfg_.shuttle, rng).register_into(params_, kShuttlePrefix);
      if (cfg_.shuttle.projector) stats_ = layer::ProjectorStats::initial(s);
      break;
    case ModelKind::gru:
      for (std::size_t l = 0; l < cfg_.baseline_layers; ++l) {
        const std::size_t in = l == 0 ? cfg_.shuttle.input_size : s;
        cells::GruParams::random(in, s, rng).register_into(params_, baseline_prefix(l));
      }
      break;
    case ModelKind::lstm:
      for (std::size_t l = 0; l < cfg_.baseline_layers; ++l) {
        const std::size_t in = l == 0 ? cfg_.shuttle.input_size : s;
        cells::LstmParams::random(in, s, rng).register_into(params_, baseline_prefix(l));
      }
      break;
  }
  const double r = 1.0 / std::sqrt(static_cast<double>(s));
  params_.add(kHeadWeight, uniform_tensor({cfg_.outputs, s}, -r, r, rng));
  params_.add(kHeadBias, Tensor({cfg_.outputs}, 0.0));
}

SequenceOutput Model::forward(Tape& tape, const tasks::SequenceBatch& batch, layer::Mode mode) {
  const std::size_t b = batch.batch();
  const std::size_t t_len = batch.steps();
  const auto& sc = cfg_.shuttle;
  if (batch.feature_size() != sc.input_size) {
    throw DimensionError("model expects " + std::to_string(sc.input_size) + " features per step, batch has " +
                         std::to_string(batch.feature_size()));
  }
  std::vector<bool> scored(t_len, false);
  if (batch.regression()) {
    scored.back() = true;
  } else {
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t i = 0; i < b && !scored[t]; ++i) scored[t] = batch.label(i, t) >= 0;
  }

  const Var head_w = tape.param(params_, kHeadWeight);
  const Var head_b = tape.param(params_, kHeadBias);
  SequenceOutput out;
  out.head.resize(t_len);
  auto emit = [&](std::size_t t, const Var& y) {
    if (scored[t]) out.head[t] = ops::add_bias(ops::matmul_bt(y, head_w), head_b);
  };

  if (cfg_.kind == ModelKind::shuttle) {
    const auto vars = layer::ShuttleVars::bind(tape, params_, kShuttlePrefix, sc);
    const layer::ProjectorStats stats = stats_ ? *stats_ : layer::ProjectorStats::initial(sc.state_size);
    // Every frame of the mini-batch is projected together, so normalization
    // statistics pool all B x T rows.
    std::optional<Var> projected;
    if (sc.projector) {
      Tensor frames({t_len * b, sc.input_size});
      for (std::size_t t = 0; t < t_len; ++t) {
        const Tensor x = batch.step(t);
        std::copy(x.values().begin(), x.values().end(), frames.values().begin() + t * b * sc.input_size);
      }
      auto projection = layer::project_input(*vars.projector, tape.constant(frames), mode, stats);
      projected = projection.out;
      if (projection.batch_mean) {
        out.batch_means.push_back(std::move(*projection.batch_mean));
        out.batch_variances.push_back(std::move(*projection.batch_variance));
      }
    }
    auto grid = layer::StateGrid::zeros(tape, sc, b);
    for (std::size_t t = 0; t < t_len; ++t) {
      const Var x = projected ? ops::row_block(*projected, t * b, b) : tape.constant(batch.step(t));
      auto step = layer::shuttle_core(vars, sc, x, grid);
      grid = std::move(step.grid);
      out.alphas.push_back(step.alpha);
      emit(t, step.y);
    }
    return out;
  }

  const Var zero = tape.constant(Tensor({b, sc.state_size}, 0.0));
  if (cfg_.kind == ModelKind::gru) {
    std::vector<cells::GruVars> layers;
    for (std::size_t l = 0; l < cfg_.baseline_layers; ++l) layers.push_back(cells::GruVars::bind(tape, params_, baseline_prefix(l)));
    std::vector<Var> h(layers.size(), zero);
    for (std::size_t t = 0; t < t_len; ++t) {
      Var x = tape.constant(batch.step(t));
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto o = cells::gru_step(layers[l], x, h[l]);
        h[l] = o.state;
        x = o.output;
      }
      emit(t, x);
    }
  } else {
    std::vector<cells::LstmVars> layers;
    for (std::size_t l = 0; l < cfg_.baseline_layers; ++l) layers.push_back(cells::LstmVars::bind(tape, params_, baseline_prefix(l)));
    std::vector<cells::LstmState> st(layers.size(), {zero, zero});
    for (std::size_t t = 0; t < t_len; ++t) {
      Var x = tape.constant(batch.step(t));
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto o = cells::lstm_step(layers[l], x, st[l]);
        st[l] = o.state;
        x = o.output;
      }
      emit(t, x);
    }
  }
  return out;
}

void Model::commit_statistics(const SequenceOutput& out) {
  if (!stats_) return;
  for (std::size_t i = 0; i < out.batch_means.size(); ++i) stats_->update(out.batch_means[i], out.batch_variances[i]);
}

Var sequence_loss(const SequenceOutput& out, const tasks::SequenceBatch& batch) {
  if (batch.regression()) {
    const auto& last = out.head.back();
    if (!last) throw ContractError("sequence_loss: final step was not scored");
    return ops::mean_squared_error(*last, batch.targets);
  }
  std::size_t total = 0;
  std::vector<std::size_t> counts(out.head.size(), 0);
  for (std::size_t t = 0; t < out.head.size(); ++t) {
    for (std::size_t i = 0; i < batch.batch(); ++i) counts[t] += batch.label(i, t) >= 0 ? 1 : 0;
    total += counts[t];
  }
  if (total == 0) throw ContractError("sequence_loss: batch carries no labels");
  std::optional<Var> loss;
  for (std::size_t t = 0; t < out.head.size(); ++t) {
    if (counts[t] == 0) continue;
    const auto labels = batch.step_labels(t);
    // Per-step means reweighted so every labelled (sequence, step) counts equally.
    const Var term = ops::scale(ops::softmax_cross_entropy(*out.head[t], labels),
                                static_cast<double>(counts[t]) / static_cast<double>(total));
    loss = loss ? ops::add(*loss, term) : term;
  }
  return *loss;
}

double attention_entropy(const SequenceOutput& out) {
  if (out.alphas.empty()) return 0.0;
  double total = 0.0;
  std::size_t rows = 0;
  for (const Var& a : out.alphas) {
    const Tensor& v = a.value();
    for (std::size_t r = 0; r < v.rows(); ++r) {
      double h = 0.0;
      for (std::size_t c = 0; c < v.cols(); ++c) {
        const double p = v(r, c);
        if (p > 0.0) h -= p * std::log(p);
      }
      total += h;
      ++rows;
    }
  }
  return total / static_cast<double>(rows);
}

StepScore score(const SequenceOutput& out, const tasks::SequenceBatch& batch) {
  StepScore s;
  if (batch.regression()) {
    const Tensor& p = out.head.back()->value();
    for (std::size_t i = 0; i < batch.batch(); ++i) {
      s.correct += std::abs(p[i] - batch.targets[i]) < kRegressionHitTolerance ? 1 : 0;
      ++s.total;
    }
    return s;
  }
  for (std::size_t t = 0; t < out.head.size(); ++t) {
    if (!out.head[t]) continue;
    const Tensor& z = out.head[t]->value();
    for (std::size_t i = 0; i < batch.batch(); ++i) {
      const int y = batch.label(i, t);
      if (y < 0) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < z.cols(); ++c)
        if (z(i, c) > z(i, best)) best = c;
      s.correct += static_cast<int>(best) == y ? 1 : 0;
      ++s.total;
    }
  }
  return s;
}

}  // namespace shuttle::training
