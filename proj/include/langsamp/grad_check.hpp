#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "langsamp/types.hpp"

namespace langsamp {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  long worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  long checked = 0;
};

// One tensor to verify: its storage plus the analytic gradient computed by a
// reverse-mode pass at the current parameter values.
template <typename Scalar>
struct GradCheckTarget {
  std::string name;
  Mat<Scalar>* value = nullptr;
  const Mat<Scalar>* grad = nullptr;
};

// Central-difference check of reverse-mode gradients. loss_fn must be a pure
// function of the tensors referenced by targets; it is re-evaluated twice per
// scalar component with the component perturbed by +/- h. Relative error uses
// max(|analytic|, |numeric|, 1e-8) as the denominator.
template <typename Scalar>
GradCheckReport grad_check(const std::function<Scalar()>& loss_fn,
                           std::span<const GradCheckTarget<Scalar>> targets, Scalar h) {
  if (!(h > Scalar(0))) throw ValueError("grad_check: h must be positive");
  GradCheckReport report;
  for (const auto& target : targets) {
    if (target.value == nullptr || target.grad == nullptr)
      throw ValueError("grad_check: null tensor in target list");
    Mat<Scalar>& value = *target.value;
    const Mat<Scalar>& grad = *target.grad;
    if (value.rows() != grad.rows() || value.cols() != grad.cols())
      throw ShapeError("grad_check: gradient shape mismatch for " + target.name);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const Scalar orig = value.data()[i];
      value.data()[i] = orig + h;
      const Scalar up = loss_fn();
      value.data()[i] = orig - h;
      const Scalar down = loss_fn();
      value.data()[i] = orig;
      if (!std::isfinite(static_cast<double>(up)) ||
          !std::isfinite(static_cast<double>(down)))
        throw NumericError("grad_check: non-finite loss while perturbing " + target.name);
      const double numeric = static_cast<double>(up - down) / (2.0 * static_cast<double>(h));
      const double analytic = static_cast<double>(grad.data()[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      report.checked += 1;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = target.name;
        report.worst_index = static_cast<long>(i);
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace langsamp
