#pragma once

/**
 * @file filter.hpp
 * @brief Kalman-Bucy filtering of the latent target U from observed prices,
 * plus the general linear-Gaussian filter it specializes.
 */

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pegamm/calibrate.hpp"
#include "pegamm/model.hpp"

namespace pegamm {

struct FilterState {
  double u_hat = 0.0;
  double v = 0.0;  ///< conditional variance of U
  double t = 0.0;
};

struct FilteredNouParams {
  NouParams base;
  double nu_hat = 0.0;  ///< volatility of U-hat in the filtered dynamics
};

/// Steady state of dV/dt = -2 eta V + nu^2 - (kappa/sigma)^2 V^2.
double asymptotic_variance(const NouParams& params);
/// nu_hat = (kappa / sigma) V_inf.
double filtered_nu(const NouParams& params);
FilteredNouParams filtered_params(const NouParams& params);

/// Right-hand side of the conditional-variance ODE.
double variance_rhs(double v, const NouParams& params);

/// Integrates the variance ODE over `horizon` days with classic RK4.
double variance_ode_evolve(double v0, double horizon, const NouParams& params);

/// RK4 sub-steps for a Riccati step of length dt at characteristic rate.
int riccati_substeps(double dt, double rate);

/// Online scalar filter; one `update` per observed price increment.
class NouFilter {
 public:
  /// v0 absent means start at the asymptotic variance.
  NouFilter(const NouParams& params, double s0, double u_hat0, std::optional<double> v0 = {},
            double t0 = 0.0);

  /// Advances to time t_new given the new observation s_new.
  void update(double t_new, double s_new);

  const FilterState& state() const { return state_; }
  double last_price() const { return s_; }

 private:
  NouParams params_;
  FilterState state_;
  double s_;
};

/// Filters a whole series. Throws ValidationError naming the first
/// non-finite price.
std::vector<FilterState> filter_series(const Sample& prices, const NouParams& params,
                                       std::optional<double> u_hat0 = {},
                                       std::optional<double> v0 = {});

// ---------------------------------------------------------------------------
// General linear-Gaussian system
//   dZ    = Gamma [Z; zeta] dt + Sigma_Z^{1/2} dW^Z          (k-dim, observed)
//   dzeta = (Theta zeta + upsilon) dt + Sigma_zeta^{1/2} dW^zeta  (d-dim)
// with corr(W^Z, W^zeta) = rho_tilde.

struct LinearGaussianSystem {
  Eigen::MatrixXd gamma_mat;   ///< k x (k + d)
  Eigen::MatrixXd theta_mat;   ///< d x d
  Eigen::VectorXd upsilon;     ///< d
  Eigen::MatrixXd sigma_z;     ///< k x k, positive definite
  Eigen::MatrixXd sigma_zeta;  ///< d x d, positive semidefinite
  Eigen::MatrixXd rho_tilde;   ///< k x d

  Eigen::Index obs_dim() const { return sigma_z.rows(); }
  Eigen::Index latent_dim() const { return theta_mat.rows(); }
  void validate() const;
};

/// The scalar NOU model written as a (k = 1, d = 1) system.
LinearGaussianSystem nou_as_linear_system(const NouParams& params);

struct GeneralFilterState {
  Eigen::VectorXd zeta_hat;
  Eigen::MatrixXd v_mat;
  double t = 0.0;
};

struct ObservationPath {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;
};

/// Principal symmetric square root of a symmetric PSD matrix.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m);

class GeneralFilter {
 public:
  GeneralFilter(LinearGaussianSystem system, const Eigen::VectorXd& z0,
                const Eigen::VectorXd& zeta_hat0, const Eigen::MatrixXd& v0, double t0 = 0.0);

  void update(double t_new, const Eigen::VectorXd& z_new);
  const GeneralFilterState& state() const { return state_; }

  /// Gain psi = [0; V]' Gamma' Sigma_Z^{-1/2} + Sigma_zeta^{1/2} rho_tilde'.
  Eigen::MatrixXd gain(const Eigen::MatrixXd& v) const;
  /// Theta V + V Theta' + Sigma_zeta - psi psi'.
  Eigen::MatrixXd covariance_rhs(const Eigen::MatrixXd& v) const;

 private:
  LinearGaussianSystem sys_;
  Eigen::MatrixXd gamma_latent_;  // columns of Gamma acting on zeta
  Eigen::MatrixXd sz_inv_sqrt_;
  Eigen::MatrixXd cross_;         // Sigma_zeta^{1/2} rho_tilde'
  double rate_base_ = 0.0;
  double rate_gain_ = 0.0;
  GeneralFilterState state_;
  Eigen::VectorXd z_;
};

std::vector<GeneralFilterState> general_filter_series(const LinearGaussianSystem& system,
                                                      const ObservationPath& observations,
                                                      const Eigen::VectorXd& zeta_hat0,
                                                      const Eigen::MatrixXd& v_mat0);

}  // namespace pegamm
