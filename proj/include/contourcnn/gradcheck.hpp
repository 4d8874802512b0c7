#pragma once

#include <functional>

#include "contourcnn/tensor.hpp"

namespace contourcnn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  Index worst_row = 0;
  Index worst_col = 0;
};

/// Compares the tape gradient of f at x with central differences.
/// Per entry the error is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// f must return a 1x1 tensor and be deterministic. Throws NumericError if f
/// yields a non-finite value at x or at any perturbed point.
GradCheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                        const Matrix& x, double eps = 1e-5);

}  // namespace contourcnn
