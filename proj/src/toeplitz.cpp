#include "pegamm/toeplitz.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "pegamm/errors.hpp"

namespace pegamm {

GaussianForm toeplitz_gaussian_form(std::span<const double> autocov,
                                    std::span<const double> centered) {
  const std::size_t d = centered.size();
  if (autocov.size() != d || d == 0) {
    throw ValidationError("toeplitz_gaussian_form: size mismatch");
  }
  if (!(autocov[0] > 0.0)) {
    throw NumericalError("covariance matrix is not positive definite (zero variance)");
  }
  GaussianForm out;
  std::vector<double> phi(d, 0.0);
  std::vector<double> prev(d, 0.0);
  double v = autocov[0];
  out.log_det = std::log(v);
  out.quad_form = centered[0] * centered[0] / v;
  for (std::size_t k = 1; k < d; ++k) {
    double acc = autocov[k];
    for (std::size_t j = 1; j < k; ++j) acc -= phi[j] * autocov[k - j];
    const double reflection = acc / v;
    if (!(std::abs(reflection) < 1.0)) {
      throw NumericalError("covariance matrix is not numerically positive definite (order " +
                           std::to_string(k) + ")");
    }
    prev.swap(phi);
    for (std::size_t j = 1; j < k; ++j) phi[j] = prev[j] - reflection * prev[k - j];
    phi[k] = reflection;
    v *= (1.0 - reflection) * (1.0 + reflection);
    if (!(v > 0.0)) {
      throw NumericalError("covariance matrix is not numerically positive definite (order " +
                           std::to_string(k) + ")");
    }
    double pred = 0.0;
    for (std::size_t j = 1; j <= k; ++j) pred += phi[j] * centered[k - j];
    const double e = centered[k] - pred;
    out.log_det += std::log(v);
    out.quad_form += e * e / v;
  }
  return out;
}

}  // namespace pegamm
