#include "shuttle/verify/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace shuttle::verify {

namespace {

double loss_at(training::Model& model, const tasks::SequenceBatch& batch) {
  Tape tape;
  const auto out = model.forward(tape, batch, layer::Mode::train);
  return training::sequence_loss(out, batch).value()[0];
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::string param_group(const std::string& name) {
  const auto pos = name.rfind('/');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

GradCheckReport gradient_check(training::Model& model, const tasks::SequenceBatch& batch, double step, double floor) {
  const auto start = std::chrono::steady_clock::now();
  ParamStore& params = model.params();
  params.zero_grad();
  {
    Tape tape;
    const auto out = model.forward(tape, batch, layer::Mode::train);
    tape.backward(training::sequence_loss(out, batch));
  }

  GradCheckReport report;
  for (auto& e : params) {
    ParamCheck check{e.name, param_group(e.name), e.value.size(), 0.0, 0.0};
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double saved = e.value[i];
      e.value[i] = saved + step;
      const double up = loss_at(model, batch);
      e.value[i] = saved - step;
      const double down = loss_at(model, batch);
      e.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = e.grad[i];
      check.worst_relative = std::max(check.worst_relative, relative_error(analytic, numeric, floor));
      check.worst_absolute = std::max(check.worst_absolute, std::abs(analytic - numeric));
    }
    report.worst_relative = std::max(report.worst_relative, check.worst_relative);
    auto g = std::find_if(report.groups.begin(), report.groups.end(), [&](const GroupCheck& gc) { return gc.group == check.group; });
    if (g == report.groups.end()) {
      report.groups.push_back({check.group, check.worst_relative, check.name});
    } else if (check.worst_relative > g->worst_relative) {
      g->worst_relative = check.worst_relative;
      g->worst_param = check.name;
    }
    report.params.push_back(std::move(check));
  }
  params.zero_grad();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace shuttle::verify
