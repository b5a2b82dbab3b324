#pragma once

/**
 * @file calibrate.hpp
 * @brief Maximum-likelihood calibration of NouParams and staking-yield
 * detrending.
 */

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"

#include "pegamm/model.hpp"

namespace pegamm {

struct Sample {
  std::vector<double> times;   ///< days, strictly increasing
  std::vector<double> values;  ///< observed exchange rate

  std::size_t size() const { return times.size(); }
  /// Requires at least `min_length` points, equal lengths, finite values and
  /// strictly increasing times.
  void validate(std::size_t min_length = 10) const;
  /// True when all time steps agree to 1e-9 relative.
  bool equally_spaced() const;
};

enum class LikelihoodMethod {
  automatic,    ///< Toeplitz when equally spaced, dense otherwise
  toeplitz,     ///< Durbin-Levinson, O(d^2); equally spaced samples only
  dense,        ///< Cholesky of the full covariance, O(d^3)
  state_space,  ///< exact prediction-error decomposition on (S, U), O(d)
};

double log_likelihood(const Sample& sample, const NouParams& params,
                      LikelihoodMethod method = LikelihoodMethod::automatic);

struct FitResult {
  NouParams params;
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct FitOptions {
  int restarts = 5;
  int max_evaluations = 4000;  ///< per restart
  double tolerance = 1e-10;    ///< relative spread of the simplex objective values
  std::uint64_t seed = 7;
  /// (delta, eta, sigma, nu); moment heuristics when absent.
  std::optional<std::array<double, 4>> initial;
  LikelihoodMethod method = LikelihoodMethod::state_space;
};

/// Heuristic starting point (delta, eta, sigma, nu).
std::array<double, 4> initial_guess(const Sample& sample);

FitResult fit_mle(const Sample& sample, const FitOptions& options = {});

struct YieldEstimate {
  double r = 0.0;          ///< annualized continuous yield (1/year, 365-day year)
  double intercept = 0.0;  ///< log-price at the first observation time
  double residual_std = 0.0;
};

inline constexpr double kDaysPerYear = 365.0;

YieldEstimate estimate_yield(const Sample& prices);

/// Multiplies values by exp(-r t), t in years since the first observation.
Sample discount_series(const Sample& sample, double r);

void to_json(nlohmann::json& j, const FitResult& fit);
void to_json(nlohmann::json& j, const YieldEstimate& y);
void to_json(nlohmann::json& j, const NouParams& p);
/// Object with kappa, eta, sigma, nu, u_bar, or a preset name. With
/// for_simulation, zero volatilities (a frozen peg) are accepted.
NouParams params_from_json(const nlohmann::json& j, bool for_simulation = false);

}  // namespace pegamm
