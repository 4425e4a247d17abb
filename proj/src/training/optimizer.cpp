#include "shuttle/training/optimizer.hpp"

#include <cmath>
#include <string>

#include "shuttle/errors.hpp"

namespace shuttle::training {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw ContractError("unknown optimizer '" + std::string(name) + "' (expected sgd_momentum or rmsprop)");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd_momentum ? "sgd_momentum" : "rmsprop";
}

void sgd_momentum_update(std::span<double> param, std::span<const double> grad, std::span<double> velocity, double lr,
                         double momentum) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw DimensionError("sgd_momentum_update: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

void rmsprop_update(std::span<double> param, std::span<const double> grad, std::span<double> mean_square, double lr,
                    double rho, double eps) {
  if (param.size() != grad.size() || param.size() != mean_square.size()) {
    throw DimensionError("rmsprop_update: parameter, gradient and accumulator sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    mean_square[i] = rho * mean_square[i] + (1.0 - rho) * grad[i] * grad[i];
    param[i] -= lr * grad[i] / std::sqrt(mean_square[i] + eps);
  }
}

Optimizer::Optimizer(OptimizerSettings settings, const ParamStore& params) : settings_(settings) {
  if (settings_.momentum < 0.0 || settings_.momentum >= 1.0) throw ContractError("momentum must lie in [0, 1)");
  for (const auto& e : params) slots_.emplace_back(e.value.size(), 0.0);
}

void Optimizer::step(ParamStore& params, double lr) {
  if (params.size() != slots_.size()) throw ContractError("optimizer: parameter store changed size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    if (settings_.kind == OptimizerKind::sgd_momentum) {
      sgd_momentum_update(e.value.values(), e.grad.values(), slots_[i], lr, settings_.momentum);
    } else {
      rmsprop_update(e.value.values(), e.grad.values(), slots_[i], lr, settings_.rho, settings_.eps);
    }
  }
}

double clip_global_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params)
    for (double g : e.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double c = max_norm / norm;
    for (auto& e : params)
      for (double& g : e.grad.values()) g *= c;
  }
  return norm;
}

}  // namespace shuttle::training
