#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "shuttle/numerics/param_store.hpp"

namespace shuttle::training {

enum class OptimizerKind { sgd_momentum, rmsprop };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

/// Heavy-ball momentum: v <- mu * v + g; p <- p - lr * v.
void sgd_momentum_update(std::span<double> param, std::span<const double> grad, std::span<double> velocity, double lr,
                         double momentum);

/// ms <- rho * ms + (1 - rho) * g^2; p <- p - lr * g / sqrt(ms + eps).
void rmsprop_update(std::span<double> param, std::span<const double> grad, std::span<double> mean_square, double lr,
                    double rho, double eps);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double momentum = 0.9;
  double rho = 0.9;
  double eps = 1e-10;
};

/// Per-parameter optimizer state over a ParamStore, in store order.
class Optimizer {
 public:
  Optimizer(OptimizerSettings settings, const ParamStore& params);

  void step(ParamStore& params, double lr);

 private:
  OptimizerSettings settings_;
  std::vector<std::vector<double>> slots_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(ParamStore& params, double max_norm);

}  // namespace shuttle::training
