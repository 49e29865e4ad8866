#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bmcnn::nn {

/// Values to perturb, and the analytic gradient computed for them beforehand.
struct GradCheckTarget {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  ///< coordinates whose perturbation crossed a kink
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;

  double max_rel_error() const {
    double worst = 0.0;
    for (const auto& g : groups) worst = std::max(worst, g.max_rel_error);
    return worst;
  }
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor: error = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
};

/// Central differences (loss(x + h) - loss(x - h)) / 2h against the analytic gradient.
/// When `signature` is given, a coordinate whose perturbed evaluations change the
/// signature (ReLU masks, loss signs) sits on a kink and is skipped. `signature` is
/// called right after `loss` and describes that evaluation.
inline GradCheckReport gradient_check(std::span<GradCheckTarget> targets, const std::function<double()>& loss,
                                      const std::function<std::vector<std::uint8_t>()>& signature = {},
                                      GradCheckOptions options = {}) {
  GradCheckReport report;
  const auto base_signature = signature ? signature() : std::vector<std::uint8_t>{};
  for (GradCheckTarget& target : targets) {
    GradCheckGroup group{target.name};
    for (std::size_t i = 0; i < target.values.size(); ++i) {
      const double saved = target.values[i];
      target.values[i] = saved + options.step;
      const double plus = loss();
      const bool kink_plus = signature && signature() != base_signature;
      target.values[i] = saved - options.step;
      const double minus = loss();
      const bool kink_minus = signature && signature() != base_signature;
      target.values[i] = saved;
      if (kink_plus || kink_minus) {
        ++group.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = target.analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      group.max_abs_error = std::max(group.max_abs_error, abs_err);
      group.max_rel_error = std::max(group.max_rel_error, rel_err);
      ++group.checked;
    }
    report.groups.push_back(group);
  }
  return report;
}

}  // namespace bmcnn::nn
