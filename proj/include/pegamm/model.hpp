#pragma once

/**
 * @file model.hpp
 * @brief Two-level nested Ornstein-Uhlenbeck exchange-rate model.
 *
 *   dS = -kappa (S - U) dt + sigma dW^S
 *   dU = -eta (U - u_bar) dt + nu dW^U
 *
 * with independent Brownian motions. Time is measured in days throughout.
 */

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pegamm {

struct NouParams {
  double kappa = 0.0;  ///< reversion of S toward U (1/day)
  double eta = 0.0;    ///< reversion of U toward u_bar (1/day)
  double sigma = 0.0;  ///< first-level volatility (quote per sqrt(day))
  double nu = 0.0;     ///< second-level volatility (quote per sqrt(day))
  double u_bar = 0.0;  ///< long-term target

  /// Throws ValidationError unless kappa > eta > 0, sigma > 0, nu >= 0,
  /// u_bar > 0 and kappa - eta >= 1e-9 kappa.
  void validate() const;

  /// Same checks with sigma >= 0 allowed. Used by the price simulator, which
  /// accepts a frozen (noise-free) peg.
  void validate_for_simulation() const;
};

/// USDC/USDT reference parameters.
NouParams usdc_usdt_preset();
/// wstETH/WETH reference parameters (defined on the yield-discounted series).
NouParams wsteth_weth_preset();
/// Looks up `usdc_usdt` or `wsteth_weth`; throws ValidationError otherwise.
NouParams preset_by_name(const std::string& name);

struct PathState {
  double t = 0.0;
  double s = 0.0;
  double u = 0.0;
};

struct PricePath {
  std::vector<double> times;
  std::vector<double> values;
  std::optional<std::vector<double>> latent;

  std::size_t size() const { return times.size(); }
  void validate() const;
};

/// Stationary autocovariance of S at lag tau (days).
double stationary_cov(double tau, const NouParams& params);

/// Stationary variance of U and covariance of (S, U).
double stationary_latent_var(const NouParams& params);
double stationary_cross_cov(const NouParams& params);

/// E[S_t | S_0 = s0, U_0 = u0].
double conditional_mean(double t, double s0, double u0, const NouParams& params);

/// Exact Gaussian transition of (S, U) over a step of length dt.
struct Transition {
  // mean = u_bar + phi_ss (s - u_bar) + phi_su (u - u_bar), U analogue below
  double phi_ss = 0.0;
  double phi_su = 0.0;
  double phi_uu = 0.0;
  double var_s = 0.0;
  double cov_su = 0.0;
  double var_u = 0.0;
  // lower Cholesky factor of the 2x2 covariance
  double chol_ss = 0.0;
  double chol_us = 0.0;
  double chol_uu = 0.0;
};

Transition exact_transition(const NouParams& params, double dt);

/// Advances (s, u) by one exact step given two independent N(0,1) draws.
PathState step_exact(const Transition& tr, const NouParams& params, const PathState& state,
                     double dt, double z1, double z2);

/// Simulates n_steps exact transitions from (s0, u0). The returned path holds
/// n_steps + 1 points and keeps the latent U.
PricePath simulate_exact(const NouParams& params, double s0, double u0, double dt,
                         std::size_t n_steps, std::uint64_t seed);

/// Writes `t,s[,u]` with full double precision.
void write_price_path_csv(std::ostream& out, const PricePath& path);

}  // namespace pegamm
