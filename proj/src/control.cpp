#include "pegamm/control.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "detail/stiff_ode.hpp"
#include "pegamm/errors.hpp"
#include "pegamm/util.hpp"

namespace pegamm {

namespace {

constexpr double kBlowUp = 1e12;

void check_grid_time(const ControlCoeffs& c, double t) {
  if (c.times.empty()) throw ValidationError("ControlCoeffs: empty grid");
  const double tol = 1e-12 * std::max(1.0, c.horizon());
  if (!(t >= -tol) || !(t <= c.horizon() + tol)) {
    throw ValidationError("ControlCoeffs: time " + fmt_double(t) + " outside grid [0, " +
                          fmt_double(c.horizon()) + "]");
  }
}

struct AbState {
  Mat3 a;
  Vec3 b;
};

// One classic RK4 step of length -h (backward in time).
AbState backward_step(const RiccatiSystem& sys, const AbState& s, double h) {
  const Mat3 ka1 = sys.a_rhs(s.a);
  const Vec3 kb1 = sys.b_rhs(s.a, s.b);
  const Mat3 a2 = s.a - 0.5 * h * ka1;
  const Vec3 b2 = s.b - 0.5 * h * kb1;
  const Mat3 ka2 = sys.a_rhs(a2);
  const Vec3 kb2 = sys.b_rhs(a2, b2);
  const Mat3 a3 = s.a - 0.5 * h * ka2;
  const Vec3 b3 = s.b - 0.5 * h * kb2;
  const Mat3 ka3 = sys.a_rhs(a3);
  const Vec3 kb3 = sys.b_rhs(a3, b3);
  const Mat3 a4 = s.a - h * ka3;
  const Vec3 b4 = s.b - h * kb3;
  const Mat3 ka4 = sys.a_rhs(a4);
  const Vec3 kb4 = sys.b_rhs(a4, b4);
  AbState out;
  out.a = s.a - h / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
  out.a = (0.5 * (out.a + out.a.transpose())).eval();
  out.b = s.b - h / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
  return out;
}

void check_blow_up(const AbState& s, double t) {
  if (!s.a.allFinite() || !s.b.allFinite() || s.a.norm() > kBlowUp) {
    throw NumericalError("solve_control: Riccati blow-up (|A| > 1e12) at t=" + fmt_double(t));
  }
}

}  // namespace

void ControlConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("control: gamma must be > 0");
  if (!(horizon_T > 0.0) || !std::isfinite(horizon_T)) {
    throw ValidationError("control: horizon_T must be > 0");
  }
  if (grid_n < 100) throw ValidationError("control: grid_n must be >= 100");
}

double delta_moment(const LiquiditySpec& liquidity, double gamma, int i, int j, int eps) {
  liquidity.validate();
  if (i < 0 || i > 2) throw ValidationError("delta_moment: i must be 0, 1 or 2");
  double total = 0.0;
  for (const auto& atom : liquidity.sizes.atoms) {
    const QuadCoeffs qb = quad_fit(liquidity.bid, atom.z, gamma);
    const QuadCoeffs qa = quad_fit(liquidity.ask, atom.z, gamma);
    const auto pick = [i](const QuadCoeffs& q) {
      return i == 0 ? q.alpha0 : (i == 1 ? q.alpha1 : q.alpha2);
    };
    const double zj = std::pow(atom.z, j);
    total += pick(qb) * zj * atom.w + eps * pick(qa) * zj * atom.w;
  }
  return total;
}

DeltaMoments delta_moments(const LiquiditySpec& liquidity, double gamma) {
  liquidity.validate();
  DeltaMoments d;
  for (const auto& atom : liquidity.sizes.atoms) {
    const QuadCoeffs qb = quad_fit(liquidity.bid, atom.z, gamma);
    const QuadCoeffs qa = quad_fit(liquidity.ask, atom.z, gamma);
    d.d211 += (qb.alpha2 + qa.alpha2) * atom.z * atom.w;
    d.d11m1 += (qb.alpha1 - qa.alpha1) * atom.z * atom.w;
    d.d22m1 += (qb.alpha2 - qa.alpha2) * atom.z * atom.z * atom.w;
  }
  return d;
}

Mat3 RiccatiSystem::a_rhs(const Mat3& a) const {
  return a * m_a * a + a * u_a + u_a.transpose() * a + r_a;
}

Vec3 RiccatiSystem::b_rhs(const Mat3& a, const Vec3& b) const {
  return a * m_a * b + a * v_b + 2.0 * d22m1 * a(0, 0) * a.col(0) + u_a.transpose() * b;
}

RiccatiSystem build_riccati_system(const FilteredNouParams& fp, double gamma,
                                   const DeltaMoments& deltas) {
  const NouParams& p = fp.base;
  const double s = p.sigma;
  const double nh = fp.nu_hat;
  RiccatiSystem sys;
  sys.m_a << deltas.d211, 0.0, 0.0,
             0.0, -gamma * s * s, -gamma * s * nh,
             0.0, -gamma * s * nh, -gamma * nh * nh;
  sys.m_a *= 2.0;
  sys.u_a << 0.0, 0.0, 0.0,
             gamma * s * s, p.kappa, -p.kappa,
             gamma * s * nh, 0.0, p.eta;
  sys.r_a << -gamma * s * s, -p.kappa, p.kappa,
             -p.kappa, 0.0, 0.0,
             p.kappa, 0.0, 0.0;
  sys.r_a *= 0.5;
  sys.v_b << 2.0 * deltas.d11m1, 0.0, -2.0 * p.eta * p.u_bar;
  sys.d22m1 = deltas.d22m1;
  return sys;
}

std::pair<Mat3, Vec3> ControlCoeffs::at(double t) const {
  check_grid_time(*this, t);
  if (ergodic || times.size() == 1) return {a_mats.front(), b_vecs.front()};
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t upper = std::clamp<std::size_t>(static_cast<std::size_t>(it - times.begin()), 1,
                                                    times.size() - 1);
  const std::size_t i = upper - 1;
  const double w = std::clamp((t - times[i]) / (times[upper] - times[i]), 0.0, 1.0);
  return {(1.0 - w) * a_mats[i] + w * a_mats[upper], (1.0 - w) * b_vecs[i] + w * b_vecs[upper]};
}

ControlCoeffs solve_control(const FilteredNouParams& params, const ControlConfig& config,
                            const DeltaMoments& deltas) {
  params.base.validate();
  config.validate();
  const RiccatiSystem sys = build_riccati_system(params, config.gamma, deltas);
  const auto n = static_cast<std::size_t>(config.grid_n);
  const double h = config.horizon_T / static_cast<double>(n - 1);

  ControlCoeffs out;
  out.gamma = config.gamma;
  out.deltas = deltas;
  out.ergodic = false;
  out.times.resize(n);
  out.a_mats.resize(n);
  out.b_vecs.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.times[i] = h * static_cast<double>(i);
  out.times.back() = config.horizon_T;

  AbState state{Mat3::Zero(), Vec3::Zero()};
  out.a_mats[n - 1] = state.a;
  out.b_vecs[n - 1] = state.b;
  for (std::size_t i = n - 1; i-- > 0;) {
    state = backward_step(sys, state, h);
    check_blow_up(state, out.times[i]);
    out.a_mats[i] = state.a;
    out.b_vecs[i] = state.b;
  }
  return out;
}

std::pair<Mat3, Vec3> ergodic_coeffs(const FilteredNouParams& params, const ControlConfig& config,
                                     const DeltaMoments& deltas) {
  params.base.validate();
  config.validate();
  const RiccatiSystem sys = build_riccati_system(params, config.gamma, deltas);

  // Time to maturity tau = T - t runs forward, so d/dtau (A, B) = -(A', B').
  // Fast modes act within hours while the inventory mode settles only
  // algebraically in the horizon, so an implicit adaptive stepper is used;
  // its step grows with tau instead of being pinned by the fast modes.
  // The entries of A and B span some 25 orders of magnitude (inventory is
  // counted in quote units, prices are O(1)); the stepper works on the
  // balanced variables D A D and D B with D = diag(sqrt(M00), 1/sqrt(M00),
  // 1/sqrt(M00)), which brings M, U and R to order one.
  const double d0 = sys.m_a(0, 0) > 0.0 ? std::sqrt(sys.m_a(0, 0)) : 1.0;
  const Vec3 dscale(d0, 1.0 / d0, 1.0 / d0);
  detail::StiffState scale{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) scale[static_cast<std::size_t>(3 * r + c)] = dscale(r) * dscale(c);
    scale[static_cast<std::size_t>(9 + r)] = dscale(r);
  }
  const auto unpack = [&](const detail::StiffState& x) {
    AbState s;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const auto k = static_cast<std::size_t>(3 * r + c);
        s.a(r, c) = x[k] / scale[k];
      }
      const auto k = static_cast<std::size_t>(9 + r);
      s.b(r) = x[k] / scale[k];
    }
    return s;
  };
  const auto pack = [&](const Mat3& a, const Vec3& b, detail::StiffState& x) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const auto k = static_cast<std::size_t>(3 * r + c);
        x[k] = a(r, c) * scale[k];
      }
      const auto k = static_cast<std::size_t>(9 + r);
      x[k] = b(r) * scale[k];
    }
  };
  detail::StiffSystem ode;
  ode.rhs = [&](const detail::StiffState& x, detail::StiffState& dx) {
    const AbState s = unpack(x);
    pack(-sys.a_rhs(s.a), -sys.b_rhs(s.a, s.b), dx);
  };
  // The right-hand side is quadratic, so each Jacobian column is an exact
  // directional derivative along one unit perturbation of a scaled variable.
  ode.jacobian = [&](const detail::StiffState& x, detail::StiffJacobian& jac) {
    const AbState s = unpack(x);
    const Mat3 ma = sys.m_a * s.a;
    const Mat3 am = s.a * sys.m_a;
    const Vec3 mb = sys.m_a * s.b;
    detail::StiffState col{};
    for (std::size_t k = 0; k < detail::kStiffDim; ++k) {
      Mat3 da = Mat3::Zero();
      Vec3 db = Vec3::Zero();
      if (k < 9) {
        Mat3 e = Mat3::Zero();
        e(static_cast<int>(k / 3), static_cast<int>(k % 3)) = 1.0 / scale[k];
        da = e * ma + am * e + e * sys.u_a + sys.u_a.transpose() * e;
        db = e * mb + e * sys.v_b + 2.0 * sys.d22m1 * (e(0, 0) * s.a.col(0) + s.a(0, 0) * e.col(0));
      } else {
        Vec3 e = Vec3::Zero();
        e(static_cast<int>(k - 9)) = 1.0 / scale[k];
        db = am * e + sys.u_a.transpose() * e;
      }
      pack(-da, -db, col);
      for (std::size_t r = 0; r < detail::kStiffDim; ++r) jac[r][k] = col[r];
    }
  };
  double dt = config.horizon_T / static_cast<double>(config.grid_n - 1);
  detail::StiffState x{};
  ode.keep_going = [&](const detail::StiffState& xs, double tau) {
    const AbState s = unpack(xs);
    if (!s.a.allFinite() || !s.b.allFinite() || s.a.norm() > kBlowUp) {
      throw NumericalError("ergodic_coeffs: Riccati blow-up (|A| > 1e12) at time to maturity " +
                           fmt_double(tau) + " days");
    }
    return true;
  };
  const auto advance = [&](double from, double to) {
    if (detail::integrate_stiff(ode, x, from, to, dt, 1e-12, 1e-10) != detail::StiffStatus::done) {
      throw NumericalError("ergodic_coeffs: step size collapsed before tau=" + fmt_double(to) + " days");
    }
    return unpack(x);
  };

  double horizon = config.horizon_T;
  AbState state = advance(0.0, horizon);
  for (int doubling = 0; doubling < 20; ++doubling) {
    const AbState prev = state;
    state = advance(horizon, 2.0 * horizon);
    horizon *= 2.0;
    const double da = (state.a - prev.a).norm();
    const double db = (state.b - prev.b).norm();
    const bool a_ok = da <= 1e-8 * state.a.norm();
    const bool b_ok = db <= 1e-8 * state.b.norm() || state.b.norm() == 0.0;
    if (a_ok && b_ok) {
      state.a = (0.5 * (state.a + state.a.transpose())).eval();
      return {state.a, state.b};
    }
  }
  throw NumericalError("ergodic_coeffs: A(0), B(0) did not stabilize after 20 horizon doublings (T = " +
                       fmt_double(horizon) + " days)");
}

ControlCoeffs ergodic_control(const FilteredNouParams& params, const ControlConfig& config,
                              const DeltaMoments& deltas) {
  const auto [a, b] = ergodic_coeffs(params, config, deltas);
  ControlCoeffs out;
  out.gamma = config.gamma;
  out.deltas = deltas;
  out.ergodic = true;
  out.times = {0.0, config.horizon_T};
  out.a_mats = {a, a};
  out.b_vecs = {b, b};
  return out;
}

ControlCoeffs zero_control(double gamma, double horizon) {
  ControlCoeffs out;
  out.gamma = gamma;
  out.times = {0.0, horizon};
  out.a_mats = {Mat3::Zero(), Mat3::Zero()};
  out.b_vecs = {Vec3::Zero(), Vec3::Zero()};
  return out;
}

double reservation_shift(const Mat3& a, const Vec3& b, double y1, double s, double u_hat, double z,
                         Side side) {
  const Vec3 x(y1, s, u_hat);
  const double ay = a.row(0).dot(x);
  if (side == Side::ask) return -2.0 * ay + z * a(0, 0) - b(0);
  return 2.0 * ay + z * a(0, 0) + b(0);
}

double greedy_markups(const ControlCoeffs& coeffs, const LiquiditySpec& liquidity, double t,
                      double y1, double s, double u_hat, double z, Side side) {
  const auto [a, b] = coeffs.at(t);
  const double p = reservation_shift(a, b, y1, s, u_hat, z, side);
  return optimal_markup(liquidity.side(side), z, p, coeffs.gamma);
}

void to_json(nlohmann::json& j, const ControlCoeffs& c) {
  nlohmann::json mats = nlohmann::json::array();
  nlohmann::json vecs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    std::vector<double> flat;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) flat.push_back(c.a_mats[i](r, k));
    }
    mats.push_back(flat);
    vecs.push_back({c.b_vecs[i](0), c.b_vecs[i](1), c.b_vecs[i](2)});
  }
  j = nlohmann::json{{"gamma", c.gamma},
                     {"ergodic", c.ergodic},
                     {"deltas", {{"d211", c.deltas.d211}, {"d11m1", c.deltas.d11m1},
                                 {"d22m1", c.deltas.d22m1}}},
                     {"times", c.times},
                     {"a", mats},
                     {"b", vecs}};
}

ControlCoeffs control_from_json(const nlohmann::json& j) {
  try {
    ControlCoeffs c;
    c.gamma = j.at("gamma").get<double>();
    c.ergodic = j.value("ergodic", false);
    if (j.contains("deltas")) {
      const auto& d = j.at("deltas");
      c.deltas = {d.at("d211").get<double>(), d.at("d11m1").get<double>(),
                  d.at("d22m1").get<double>()};
    }
    c.times = j.at("times").get<std::vector<double>>();
    const auto& mats = j.at("a");
    const auto& vecs = j.at("b");
    if (mats.size() != c.times.size() || vecs.size() != c.times.size() || c.times.size() < 2) {
      throw ValidationError("control coefficients: 'times', 'a', 'b' lengths differ");
    }
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      const auto flat = mats.at(i).get<std::vector<double>>();
      const auto vec = vecs.at(i).get<std::vector<double>>();
      if (flat.size() != 9 || vec.size() != 3) {
        throw ValidationError("control coefficients: entry " + std::to_string(i) + " malformed");
      }
      Mat3 a;
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) a(r, k) = flat[static_cast<std::size_t>(3 * r + k)];
      }
      c.a_mats.push_back(a);
      c.b_vecs.push_back(Vec3(vec[0], vec[1], vec[2]));
    }
    if (!(c.gamma > 0.0)) throw ValidationError("control coefficients: gamma must be > 0");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("control coefficients: ") + e.what());
  }
}

}  // namespace pegamm
