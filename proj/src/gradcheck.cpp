#include "contourcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace contourcnn {

namespace {

double evaluate_scalar(const std::function<Tensor(const Tensor&)>& f, const Matrix& x) {
  const Tensor out = f(Tensor(x));
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericError("finite_difference_check: f produced a non-finite value");
  return v;
}

}  // namespace

GradCheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                        const Matrix& x, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_difference_check: eps must be positive");

  Tape tape;
  const Tensor input = tape.variable(x);
  const Tensor loss = f(input);
  if (!std::isfinite(loss.item())) {
    throw NumericError("finite_difference_check: f produced a non-finite value");
  }
  tape.backward(loss);
  const Matrix analytic = tape.grad(input);

  GradCheckReport report;
  Matrix probe = x;
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) {
      const double orig = probe(r, c);
      probe(r, c) = orig + eps;
      const double up = evaluate_scalar(f, probe);
      probe(r, c) = orig - eps;
      const double down = evaluate_scalar(f, probe);
      probe(r, c) = orig;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic(r, c);
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_row = r;
        report.worst_col = c;
      }
    }
  }
  return report;
}

}  // namespace contourcnn
