#pragma once

/**
 * @file toeplitz.hpp
 * @brief Gaussian quadratic form and log-determinant for symmetric positive
 * definite Toeplitz covariance matrices.
 *
 * Uses the Durbin-Levinson recursion on the autocovariance sequence: the
 * one-step prediction errors e_k and their variances v_k give
 *   y' T^{-1} y = sum e_k^2 / v_k,   log det T = sum log v_k
 * in O(d^2) time and O(d) memory.
 */

#include <span>

namespace pegamm {

struct GaussianForm {
  double log_det = 0.0;
  double quad_form = 0.0;
};

/// `autocov[k]` is the covariance at lag k; `centered` has the same length.
/// Throws NumericalError if the matrix is not numerically positive definite.
GaussianForm toeplitz_gaussian_form(std::span<const double> autocov,
                                    std::span<const double> centered);

}  // namespace pegamm
