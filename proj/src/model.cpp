#include "pegamm/model.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <ostream>

#include "pegamm/errors.hpp"
#include "pegamm/rng.hpp"
#include "pegamm/util.hpp"

namespace pegamm {

namespace {

void check_common(const NouParams& p) {
  if (!std::isfinite(p.kappa) || !std::isfinite(p.eta) || !std::isfinite(p.sigma) ||
      !std::isfinite(p.nu) || !std::isfinite(p.u_bar)) {
    throw ValidationError("NouParams: non-finite parameter");
  }
  if (!(p.eta > 0.0)) throw ValidationError("NouParams: eta must be > 0");
  if (!(p.kappa > p.eta)) throw ValidationError("NouParams: kappa must exceed eta");
  if (p.kappa - p.eta < 1e-9 * p.kappa) {
    throw ValidationError("NouParams: kappa - eta below 1e-9 kappa (confluent case unsupported)");
  }
  if (p.nu < 0.0) throw ValidationError("NouParams: nu must be >= 0");
  if (!(p.u_bar > 0.0)) throw ValidationError("NouParams: u_bar must be > 0");
}

// (1 - exp(-c h)) / c
double decay_integral(double c, double h) { return c == 0.0 ? h : -std::expm1(-c * h) / c; }

}  // namespace

void NouParams::validate() const {
  check_common(*this);
  if (!(sigma > 0.0)) throw ValidationError("NouParams: sigma must be > 0");
}

void NouParams::validate_for_simulation() const {
  check_common(*this);
  if (sigma < 0.0) throw ValidationError("NouParams: sigma must be >= 0");
}

NouParams usdc_usdt_preset() { return {5e-2, 3e-2, 5e-4, 5e-4, 1.00}; }

NouParams wsteth_weth_preset() { return {6.0, 3.0, 6e-3, 4e-3, 1.15}; }

NouParams preset_by_name(const std::string& name) {
  if (name == "usdc_usdt") return usdc_usdt_preset();
  if (name == "wsteth_weth") return wsteth_weth_preset();
  throw ValidationError("unknown preset '" + name + "' (expected usdc_usdt or wsteth_weth)");
}

void PricePath::validate() const {
  if (times.size() != values.size()) throw ValidationError("PricePath: length mismatch");
  if (latent && latent->size() != times.size()) {
    throw ValidationError("PricePath: latent length mismatch");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw ValidationError("PricePath: times not strictly increasing at index " +
                            std::to_string(i));
    }
  }
}

double stationary_cov(double tau, const NouParams& p) {
  p.validate_for_simulation();
  const double lag = std::abs(tau);
  const double k2 = p.kappa * p.kappa;
  const double e2 = p.eta * p.eta;
  const double nu2 = p.nu * p.nu;
  const double slow = 0.5 * k2 * nu2 / (p.eta * (k2 - e2));
  const double fast = 0.5 * (p.sigma * p.sigma / p.kappa - p.kappa * nu2 / (k2 - e2));
  return slow * std::exp(-p.eta * lag) + fast * std::exp(-p.kappa * lag);
}

double stationary_latent_var(const NouParams& p) { return p.nu * p.nu / (2.0 * p.eta); }

double stationary_cross_cov(const NouParams& p) {
  return p.kappa * p.nu * p.nu / (2.0 * p.eta * (p.kappa + p.eta));
}

double conditional_mean(double t, double s0, double u0, const NouParams& p) {
  p.validate_for_simulation();
  if (!(t >= 0.0)) throw ValidationError("conditional_mean: negative horizon");
  const double ek = std::exp(-p.kappa * t);
  const double ratio = p.kappa / (p.kappa - p.eta);
  // e^{-eta t} - e^{-kappa t} without cancellation
  const double spread = std::exp(-p.eta * t) * -std::expm1(-(p.kappa - p.eta) * t);
  return p.u_bar + (s0 - p.u_bar) * ek + ratio * (u0 - p.u_bar) * spread;
}

Transition exact_transition(const NouParams& p, double dt) {
  p.validate_for_simulation();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("exact_transition: dt must be > 0");
  const double gap = p.kappa - p.eta;
  Transition tr;
  tr.phi_ss = std::exp(-p.kappa * dt);
  tr.phi_uu = std::exp(-p.eta * dt);
  tr.phi_su = p.kappa * tr.phi_uu * -std::expm1(-gap * dt) / gap;

  const double nu2 = p.nu * p.nu;
  double kernel_sq = 0.0;     // int_0^h phi(u)^2 du
  double kernel_cross = 0.0;  // int_0^h phi(u) e^{-eta u} du
  if (gap * dt > 0.5 && gap > 1e-3 * p.kappa) {
    const double inv = 1.0 / gap;
    const double g_ee = decay_integral(2.0 * p.eta, dt);
    const double g_ke = decay_integral(p.kappa + p.eta, dt);
    const double g_kk = decay_integral(2.0 * p.kappa, dt);
    kernel_sq = inv * inv * (g_ee - 2.0 * g_ke + g_kk);
    kernel_cross = inv * (g_ee - g_ke);
  } else {
    // phi(u) = (e^{-eta u} - e^{-kappa u}) / (kappa - eta), evaluated without
    // cancellation; composite Gauss-Legendre on panels no wider than 1/kappa.
    const auto phi = [&](double u) { return std::exp(-p.eta * u) * -std::expm1(-gap * u) / gap; };
    const double horizon = std::min(dt, 60.0 / p.eta);
    const auto panels =
        static_cast<std::size_t>(std::max(1.0, std::ceil(horizon * p.kappa)));
    const double width = horizon / static_cast<double>(panels);
    using Rule = boost::math::quadrature::gauss<double, 20>;
    for (std::size_t i = 0; i < panels; ++i) {
      const double a = width * static_cast<double>(i);
      const double b = a + width;
      kernel_sq += Rule::integrate([&](double u) { const double f = phi(u); return f * f; }, a, b);
      kernel_cross += Rule::integrate([&](double u) { return phi(u) * std::exp(-p.eta * u); }, a, b);
    }
  }
  tr.var_u = nu2 * decay_integral(2.0 * p.eta, dt);
  tr.cov_su = p.kappa * nu2 * kernel_cross;
  tr.var_s = p.kappa * p.kappa * nu2 * kernel_sq + p.sigma * p.sigma * decay_integral(2.0 * p.kappa, dt);

  if (tr.var_s > 0.0) {
    tr.chol_ss = std::sqrt(tr.var_s);
    tr.chol_us = tr.cov_su / tr.chol_ss;
    tr.chol_uu = std::sqrt(std::max(0.0, tr.var_u - tr.chol_us * tr.chol_us));
  } else {
    tr.chol_uu = std::sqrt(tr.var_u);
  }
  return tr;
}

PathState step_exact(const Transition& tr, const NouParams& p, const PathState& state, double dt,
                     double z1, double z2) {
  const double ds = state.s - p.u_bar;
  const double du = state.u - p.u_bar;
  PathState next;
  next.t = state.t + dt;
  next.s = p.u_bar + tr.phi_ss * ds + tr.phi_su * du + tr.chol_ss * z1;
  next.u = p.u_bar + tr.phi_uu * du + tr.chol_us * z1 + tr.chol_uu * z2;
  return next;
}

PricePath simulate_exact(const NouParams& params, double s0, double u0, double dt,
                         std::size_t n_steps, std::uint64_t seed) {
  if (!std::isfinite(s0) || !std::isfinite(u0)) {
    throw ValidationError("simulate_exact: non-finite initial state");
  }
  const Transition tr = exact_transition(params, dt);
  Rng rng(seed);
  PricePath path;
  path.times.reserve(n_steps + 1);
  path.values.reserve(n_steps + 1);
  std::vector<double> latent;
  latent.reserve(n_steps + 1);
  PathState state{0.0, s0, u0};
  path.times.push_back(0.0);
  path.values.push_back(s0);
  latent.push_back(u0);
  for (std::size_t i = 1; i <= n_steps; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    state = step_exact(tr, params, state, dt, z1, z2);
    // grid times are i*dt rather than accumulated sums
    state.t = dt * static_cast<double>(i);
    path.times.push_back(state.t);
    path.values.push_back(state.s);
    latent.push_back(state.u);
  }
  path.latent = std::move(latent);
  return path;
}

void write_price_path_csv(std::ostream& out, const PricePath& path) {
  out << (path.latent ? "t,s,u\n" : "t,s\n");
  for (std::size_t i = 0; i < path.size(); ++i) {
    out << fmt_double(path.times[i]) << ',' << fmt_double(path.values[i]);
    if (path.latent) out << ',' << fmt_double((*path.latent)[i]);
    out << '\n';
  }
}

}  // namespace pegamm
