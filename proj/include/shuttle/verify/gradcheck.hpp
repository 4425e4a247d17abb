#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "shuttle/tasks/sequence_batch.hpp"
#include "shuttle/training/model.hpp"

namespace shuttle::verify {

struct ParamCheck {
  std::string name;
  std::string group;
  std::size_t scalars = 0;
  double worst_relative = 0.0;
  double worst_absolute = 0.0;
};

struct GroupCheck {
  std::string group;
  double worst_relative = 0.0;
  std::string worst_param;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  std::vector<GroupCheck> groups;  // in first-seen order
  double worst_relative = 0.0;
  double seconds = 0.0;

  bool passed(double tolerance) const { return worst_relative < tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Parameter group: the name up to its last '/'.
std::string param_group(const std::string& name);

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares the BPTT gradient of the train-mode sequence loss against
/// central differences for every trainable scalar. Running statistics are not touched.
GradCheckReport gradient_check(training::Model& model, const tasks::SequenceBatch& batch,
                               double step = kGradCheckStep, double floor = kGradCheckFloor);

}  // namespace shuttle::verify
