#pragma once

/**
 * @file control.hpp
 * @brief Quadratic approximation of the value function and greedy markups.
 *
 * The value-function correction is approximated by
 *   theta(t, x) = -x' A(t) x - x' B(t) - C(t),   x = (y, S, U_hat),
 * where y is the pool's crypto-1 inventory change. A and B solve
 *   A' = A M A + A U + U' A + R
 *   B' = A M B + A V + 2 D22 (e_y' A e_y) A e_y + U' B
 * backward from A(T) = B(T) = 0. C never enters the markups.
 */

#include <array>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "pegamm/filter.hpp"
#include "pegamm/intensity.hpp"

namespace pegamm {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct ControlConfig {
  double gamma = 1e-5;      ///< risk aversion (1/quote)
  double horizon_T = 1.0;   ///< days
  int grid_n = 10001;       ///< grid points on [0, T]
  bool ergodic = false;

  void validate() const;
};

/// Moments sum_z alpha_i^{side}(z) z^j w of the quadratic Hamiltonian
/// coefficients, combined as bid + eps * ask.
struct DeltaMoments {
  double d211 = 0.0;   ///< i=2, j=1, eps=+1
  double d11m1 = 0.0;  ///< i=1, j=1, eps=-1
  double d22m1 = 0.0;  ///< i=2, j=2, eps=-1
};

double delta_moment(const LiquiditySpec& liquidity, double gamma, int i, int j, int eps);
DeltaMoments delta_moments(const LiquiditySpec& liquidity, double gamma);

/// The constant matrices of the A/B system.
struct RiccatiSystem {
  Mat3 m_a;
  Mat3 u_a;
  Mat3 r_a;
  Vec3 v_b;
  double d22m1 = 0.0;

  Mat3 a_rhs(const Mat3& a) const;
  Vec3 b_rhs(const Mat3& a, const Vec3& b) const;
};

RiccatiSystem build_riccati_system(const FilteredNouParams& params, double gamma,
                                   const DeltaMoments& deltas);

struct ControlCoeffs {
  std::vector<double> times;
  std::vector<Mat3> a_mats;
  std::vector<Vec3> b_vecs;
  DeltaMoments deltas;
  double gamma = 0.0;
  bool ergodic = false;

  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  /// Linear interpolation on the grid; A(0), B(0) when ergodic. Throws
  /// ValidationError for t outside [0, T].
  std::pair<Mat3, Vec3> at(double t) const;
};

ControlCoeffs solve_control(const FilteredNouParams& params, const ControlConfig& config,
                            const DeltaMoments& deltas);

/// Long-horizon limit of (A(0), B(0)). The horizon is doubled (continuing the
/// backward integration) until A(0) and B(0) change by < 1e-8 relative.
std::pair<Mat3, Vec3> ergodic_coeffs(const FilteredNouParams& params, const ControlConfig& config,
                                     const DeltaMoments& deltas);

/// Ergodic coefficients packaged as a constant ControlCoeffs on [0, T].
ControlCoeffs ergodic_control(const FilteredNouParams& params, const ControlConfig& config,
                              const DeltaMoments& deltas);

/// Coefficients with A = B = 0 on [0, T].
ControlCoeffs zero_control(double gamma, double horizon);

/// Reservation shift p = [theta(y) - theta(y -/+ z)] / z for the ask (0->1)
/// and bid (1->0) sides respectively.
double reservation_shift(const Mat3& a, const Vec3& b, double y1, double s, double u_hat, double z,
                         Side side);

double greedy_markups(const ControlCoeffs& coeffs, const LiquiditySpec& liquidity, double t,
                      double y1, double s, double u_hat, double z, Side side);

void to_json(nlohmann::json& j, const ControlCoeffs& coeffs);
ControlCoeffs control_from_json(const nlohmann::json& j);

}  // namespace pegamm
