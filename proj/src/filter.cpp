#include "pegamm/filter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

#include "pegamm/errors.hpp"

namespace pegamm {

double asymptotic_variance(const NouParams& p) {
  p.validate();
  const double ratio = p.kappa * p.nu / p.sigma;
  return p.nu * p.nu / (p.eta + std::sqrt(p.eta * p.eta + ratio * ratio));
}

double filtered_nu(const NouParams& p) {
  p.validate();
  const double ratio = p.kappa * p.nu / p.sigma;
  return p.nu * ratio / (p.eta + std::sqrt(p.eta * p.eta + ratio * ratio));
}

FilteredNouParams filtered_params(const NouParams& p) { return {p, filtered_nu(p)}; }

double variance_rhs(double v, const NouParams& p) {
  const double g = p.kappa / p.sigma;
  return -2.0 * p.eta * v + p.nu * p.nu - g * g * v * v;
}

int riccati_substeps(double dt, double rate) {
  const double n = std::ceil(dt * rate / 2e-3);
  if (!(n >= 1.0)) return 1;
  return static_cast<int>(std::min(n, 1e9));
}

namespace {

double scalar_rate(double v, const NouParams& p) {
  const double g = p.kappa / p.sigma;
  return 2.0 * p.eta + 2.0 * g * p.nu + 2.0 * g * g * std::abs(v);
}

double rk4_variance(double v, double horizon, const NouParams& p) {
  const int n = riccati_substeps(horizon, scalar_rate(v, p));
  const double h = horizon / n;
  for (int i = 0; i < n; ++i) {
    const double k1 = variance_rhs(v, p);
    const double k2 = variance_rhs(v + 0.5 * h * k1, p);
    const double k3 = variance_rhs(v + 0.5 * h * k2, p);
    const double k4 = variance_rhs(v + h * k3, p);
    v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return v;
}

}  // namespace

double variance_ode_evolve(double v0, double horizon, const NouParams& p) {
  p.validate();
  if (!(v0 >= 0.0)) throw ValidationError("variance_ode_evolve: v0 must be >= 0");
  if (!(horizon >= 0.0)) throw ValidationError("variance_ode_evolve: negative horizon");
  if (horizon == 0.0) return v0;
  return rk4_variance(v0, horizon, p);
}

NouFilter::NouFilter(const NouParams& params, double s0, double u_hat0, std::optional<double> v0,
                     double t0)
    : params_(params), s_(s0) {
  params_.validate();
  if (!std::isfinite(s0) || !std::isfinite(u_hat0)) {
    throw ValidationError("NouFilter: non-finite initial state");
  }
  state_.u_hat = u_hat0;
  state_.v = v0.value_or(asymptotic_variance(params_));
  if (!(state_.v >= 0.0)) throw ValidationError("NouFilter: v0 must be >= 0");
  state_.t = t0;
}

void NouFilter::update(double t_new, double s_new) {
  const double dt = t_new - state_.t;
  if (!(dt > 0.0)) throw ValidationError("NouFilter: time must increase");
  const auto& p = params_;
  // Euler-Maruyama for the mean on the variance sub-step grid, with the
  // observed increment spread evenly; one sub-step is the plain Euler update.
  const int n = riccati_substeps(dt, scalar_rate(state_.v, p));
  const double h = dt / n;
  const double ds = (s_new - s_) / n;
  double v = state_.v;
  double u_hat = state_.u_hat;
  for (int i = 0; i < n; ++i) {
    const double s_i = s_ + i * ds;
    const double innovation = (ds + p.kappa * (s_i - u_hat) * h) / p.sigma;
    u_hat += -p.eta * (u_hat - p.u_bar) * h + p.kappa / p.sigma * v * innovation;
    const double k1 = variance_rhs(v, p);
    const double k2 = variance_rhs(v + 0.5 * h * k1, p);
    const double k3 = variance_rhs(v + 0.5 * h * k2, p);
    const double k4 = variance_rhs(v + h * k3, p);
    v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  state_.u_hat = u_hat;
  state_.v = v;
  state_.t = t_new;
  s_ = s_new;
}

std::vector<FilterState> filter_series(const Sample& prices, const NouParams& params,
                                       std::optional<double> u_hat0, std::optional<double> v0) {
  params.validate();
  if (prices.times.size() != prices.values.size() || prices.times.empty()) {
    throw ValidationError("filter_series: empty or mismatched sample");
  }
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (!std::isfinite(prices.values[i])) {
      throw ValidationError("filter_series: non-finite price at index " + std::to_string(i));
    }
  }
  NouFilter filter(params, prices.values[0], u_hat0.value_or(params.u_bar), v0, prices.times[0]);
  std::vector<FilterState> out;
  out.reserve(prices.size());
  out.push_back(filter.state());
  for (std::size_t i = 1; i < prices.size(); ++i) {
    filter.update(prices.times[i], prices.values[i]);
    out.push_back(filter.state());
  }
  return out;
}

// ---------------------------------------------------------------------------

void LinearGaussianSystem::validate() const {
  const Eigen::Index k = sigma_z.rows();
  const Eigen::Index d = theta_mat.rows();
  if (k == 0 || d == 0) throw ValidationError("LinearGaussianSystem: empty dimensions");
  if (sigma_z.cols() != k || theta_mat.cols() != d || gamma_mat.rows() != k ||
      gamma_mat.cols() != k + d || upsilon.size() != d || sigma_zeta.rows() != d ||
      sigma_zeta.cols() != d || rho_tilde.rows() != k || rho_tilde.cols() != d) {
    throw ValidationError("LinearGaussianSystem: inconsistent shapes");
  }
  if ((sigma_z - sigma_z.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma_z.norm())) {
    throw ValidationError("LinearGaussianSystem: Sigma_Z not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_z);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("LinearGaussianSystem: Sigma_Z is not positive definite");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ez(sigma_zeta);
  if (ez.eigenvalues().minCoeff() < -1e-12 * (1.0 + sigma_zeta.norm())) {
    throw ValidationError("LinearGaussianSystem: Sigma_zeta is not positive semidefinite");
  }
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(k + d, k + d);
  corr.topRightCorner(k, d) = rho_tilde;
  corr.bottomLeftCorner(d, k) = rho_tilde.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(corr);
  if (ec.eigenvalues().minCoeff() < -1e-12) {
    throw ValidationError("LinearGaussianSystem: correlation block is not positive semidefinite");
  }
}

LinearGaussianSystem nou_as_linear_system(const NouParams& p) {
  p.validate();
  LinearGaussianSystem sys;
  sys.gamma_mat = Eigen::MatrixXd(1, 2);
  sys.gamma_mat << -p.kappa, p.kappa;
  sys.theta_mat = Eigen::MatrixXd::Constant(1, 1, -p.eta);
  sys.upsilon = Eigen::VectorXd::Constant(1, p.eta * p.u_bar);
  sys.sigma_z = Eigen::MatrixXd::Constant(1, 1, p.sigma * p.sigma);
  sys.sigma_zeta = Eigen::MatrixXd::Constant(1, 1, p.nu * p.nu);
  sys.rho_tilde = Eigen::MatrixXd::Zero(1, 1);
  return sys;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

GeneralFilter::GeneralFilter(LinearGaussianSystem system, const Eigen::VectorXd& z0,
                             const Eigen::VectorXd& zeta_hat0, const Eigen::MatrixXd& v0,
                             double t0)
    : sys_(std::move(system)), z_(z0) {
  sys_.validate();
  const Eigen::Index k = sys_.obs_dim();
  const Eigen::Index d = sys_.latent_dim();
  if (z0.size() != k || zeta_hat0.size() != d || v0.rows() != d || v0.cols() != d) {
    throw ValidationError("GeneralFilter: initial state has inconsistent shapes");
  }
  gamma_latent_ = sys_.gamma_mat.rightCols(d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys_.sigma_z);
  sz_inv_sqrt_ = es.operatorInverseSqrt();
  cross_ = symmetric_sqrt(sys_.sigma_zeta) * sys_.rho_tilde.transpose();

  const Eigen::MatrixXd info = gamma_latent_.transpose() * sys_.sigma_z.inverse() * gamma_latent_;
  rate_base_ = 2.0 * sys_.theta_mat.norm() + 2.0 * std::sqrt(info.norm() * sys_.sigma_zeta.norm()) +
               2.0 * gamma_latent_.norm() * sz_inv_sqrt_.norm() * cross_.norm();
  rate_gain_ = 2.0 * info.norm();

  state_.zeta_hat = zeta_hat0;
  state_.v_mat = 0.5 * (v0 + v0.transpose());
  state_.t = t0;
}

Eigen::MatrixXd GeneralFilter::gain(const Eigen::MatrixXd& v) const {
  return v * gamma_latent_.transpose() * sz_inv_sqrt_ + cross_;
}

Eigen::MatrixXd GeneralFilter::covariance_rhs(const Eigen::MatrixXd& v) const {
  const Eigen::MatrixXd psi = gain(v);
  return sys_.theta_mat * v + v * sys_.theta_mat.transpose() + sys_.sigma_zeta -
         psi * psi.transpose();
}

void GeneralFilter::update(double t_new, const Eigen::VectorXd& z_new) {
  const double dt = t_new - state_.t;
  if (!(dt > 0.0)) throw ValidationError("GeneralFilter: time must increase");
  if (z_new.size() != z_.size() || !z_new.allFinite()) {
    throw ValidationError("GeneralFilter: bad observation at t=" + std::to_string(t_new));
  }
  const Eigen::Index k = sys_.obs_dim();
  const Eigen::Index d = sys_.latent_dim();
  Eigen::MatrixXd v = state_.v_mat;
  const int n = riccati_substeps(dt, rate_base_ + rate_gain_ * v.norm());
  const double h = dt / n;
  const Eigen::VectorXd dz = (z_new - z_) / n;
  Eigen::VectorXd joint(k + d);
  for (int i = 0; i < n; ++i) {
    // mean: Euler-Maruyama on the sub-step grid (see NouFilter::update)
    joint << z_ + static_cast<double>(i) * dz, state_.zeta_hat;
    const Eigen::VectorXd innovation = sz_inv_sqrt_ * (dz - sys_.gamma_mat * joint * h);
    state_.zeta_hat += (sys_.theta_mat * state_.zeta_hat + sys_.upsilon) * h + gain(v) * innovation;

    const Eigen::MatrixXd k1 = covariance_rhs(v);
    const Eigen::MatrixXd k2 = covariance_rhs(v + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = covariance_rhs(v + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = covariance_rhs(v + h * k3);
    v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    v = 0.5 * (v + v.transpose()).eval();
  }
  state_.v_mat = v;
  state_.t = t_new;
  z_ = z_new;
}

std::vector<GeneralFilterState> general_filter_series(const LinearGaussianSystem& system,
                                                      const ObservationPath& observations,
                                                      const Eigen::VectorXd& zeta_hat0,
                                                      const Eigen::MatrixXd& v_mat0) {
  if (observations.times.size() != observations.values.size() || observations.times.empty()) {
    throw ValidationError("general_filter_series: empty or mismatched observations");
  }
  GeneralFilter filter(system, observations.values[0], zeta_hat0, v_mat0, observations.times[0]);
  std::vector<GeneralFilterState> out;
  out.reserve(observations.times.size());
  out.push_back(filter.state());
  for (std::size_t i = 1; i < observations.times.size(); ++i) {
    filter.update(observations.times[i], observations.values[i]);
    out.push_back(filter.state());
  }
  return out;
}

}  // namespace pegamm
