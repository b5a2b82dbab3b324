#pragma once

/**
 * @file intensity.hpp
 * @brief Logistic trade intensities and the per-trade Hamiltonians
 *
 *   Lambda(z, delta) = lambda / (1 + exp(a + b delta))
 *   H(z, p) = sup_delta Lambda(z, delta) / (gamma z) (1 - exp(-gamma z (delta - p)))
 *
 * Sides follow the pool's point of view: `bid` is the 1->0 flow (the AMM buys
 * crypto 1 at S - delta), `ask` is the 0->1 flow (the AMM sells crypto 1 at
 * S + delta).
 */

#include <string_view>
#include <vector>

#include "json.hpp"

namespace pegamm {

enum class Side { bid, ask };

std::string_view side_label(Side side);  ///< "1,0" or "0,1"

struct SideIntensity {
  double lam = 0.0;  ///< maximal arrival rate (1/day)
  double a = 0.0;
  double b = 0.0;  ///< markup sensitivity (1/quote)

  void validate() const;
};

struct SizeAtom {
  double z = 0.0;  ///< trade size in crypto-1 units
  double w = 0.0;  ///< mass
};

struct SizeMeasure {
  std::vector<SizeAtom> atoms;
  void validate() const;
};

struct LiquiditySpec {
  SideIntensity bid;  ///< 1->0 side
  SideIntensity ask;  ///< 0->1 side
  SizeMeasure sizes;

  const SideIntensity& side(Side s) const { return s == Side::bid ? bid : ask; }
  void validate() const;
};

/// Symmetric logistic liquidity with a single Dirac size atom.
LiquiditySpec symmetric_liquidity(double lam, double a, double b, double z);

/// Keys: lambda_01, a_01, b_01, lambda_10, a_10, b_10, sizes. `sizes` is a
/// list of numbers (unit mass) or of {"z": .., "w": ..} objects.
LiquiditySpec liquidity_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const LiquiditySpec& spec);

double intensity(const SideIntensity& side, double z, double delta);

/// Markup whose intensity is y; requires 0 < y < lambda.
double inverse_intensity(const SideIntensity& side, double z, double y);

struct HamiltonianValue {
  double h = 0.0;
  double dh_dp = 0.0;
  double delta_star = 0.0;
};

/// Supremum over delta by bisection on the first-order condition.
HamiltonianValue hamiltonian(const SideIntensity& side, double z, double p, double gamma);

/// Inverse intensity of gamma z H - dH/dp; coincides with the maximizer.
double optimal_markup(const SideIntensity& side, double z, double p, double gamma);

struct QuadCoeffs {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  double eval(double p) const { return alpha0 + alpha1 * p + 0.5 * alpha2 * p * p; }
};

/// Second-order Taylor expansion of H(z, .) at p = 0.
QuadCoeffs quad_fit(const SideIntensity& side, double z, double gamma);

}  // namespace pegamm
