#include "pegamm/calibrate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nelder_mead.hpp"
#include "pegamm/errors.hpp"
#include "pegamm/rng.hpp"
#include "pegamm/toeplitz.hpp"

namespace pegamm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double finish(std::size_t d, const GaussianForm& g) {
  return -0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * g.log_det - 0.5 * g.quad_form;
}

std::vector<double> centered_values(const Sample& s, double u_bar) {
  std::vector<double> c(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) c[i] = s.values[i] - u_bar;
  return c;
}

double ll_toeplitz(const Sample& s, const NouParams& p) {
  const std::size_t d = s.size();
  const double step = d > 1 ? s.times[1] - s.times[0] : 0.0;
  std::vector<double> autocov(d);
  for (std::size_t k = 0; k < d; ++k) autocov[k] = stationary_cov(step * static_cast<double>(k), p);
  const auto c = centered_values(s, p.u_bar);
  return finish(d, toeplitz_gaussian_form(autocov, c));
}

double ll_dense(const Sample& s, const NouParams& p) {
  const auto d = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd cov(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = stationary_cov(s.times[static_cast<std::size_t>(i)] -
                                          s.times[static_cast<std::size_t>(j)],
                                      p);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("covariance matrix is not numerically positive definite (Cholesky failed)");
  }
  Eigen::VectorXd y(d);
  for (Eigen::Index i = 0; i < d; ++i) y(i) = s.values[static_cast<std::size_t>(i)] - p.u_bar;
  const Eigen::VectorXd w = llt.matrixL().solve(y);
  GaussianForm g;
  const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(diag(i) > 0.0)) throw NumericalError("covariance matrix has a non-positive pivot");
    g.log_det += 2.0 * std::log(diag(i));
  }
  g.quad_form = w.squaredNorm();
  return finish(static_cast<std::size_t>(d), g);
}

// Exact Gaussian likelihood via the prediction-error decomposition of the
// (S, U) state with S observed without noise. Equal in value to the Toeplitz
// and dense routes.
double ll_state_space(const Sample& s, const NouParams& p) {
  const double c0 = stationary_cov(0.0, p);
  if (!(c0 > 0.0)) throw NumericalError("covariance matrix is not positive definite (zero variance)");
  double x = s.values[0] - p.u_bar;
  double ll = -0.5 * (kLog2Pi + std::log(c0) + x * x / c0);
  const double cross = stationary_cross_cov(p);
  double m = cross / c0 * x;
  double var = std::max(0.0, stationary_latent_var(p) - cross * cross / c0);
  Transition tr;
  double last_dt = -1.0;
  for (std::size_t k = 1; k < s.size(); ++k) {
    const double dt = s.times[k] - s.times[k - 1];
    // grid times carry rounding noise; reuse the transition for equal steps
    if (std::abs(dt - last_dt) > 1e-9 * dt) {
      tr = exact_transition(p, dt);
      last_dt = dt;
    }
    const double mean_x = tr.phi_ss * x + tr.phi_su * m;
    const double mean_y = tr.phi_uu * m;
    const double sxx = tr.phi_su * tr.phi_su * var + tr.var_s;
    const double sxy = tr.phi_su * tr.phi_uu * var + tr.cov_su;
    const double syy = tr.phi_uu * tr.phi_uu * var + tr.var_u;
    if (!(sxx > 0.0)) {
      throw NumericalError("covariance matrix is not numerically positive definite (index " +
                           std::to_string(k) + ")");
    }
    const double xn = s.values[k] - p.u_bar;
    const double e = xn - mean_x;
    ll -= 0.5 * (kLog2Pi + std::log(sxx) + e * e / sxx);
    const double gain = sxy / sxx;
    m = mean_y + gain * e;
    var = std::max(0.0, syy - gain * sxy);
    x = xn;
  }
  return ll;
}

double sample_mean(const Sample& s) {
  double sum = 0.0;
  for (double v : s.values) sum += v;
  return sum / static_cast<double>(s.size());
}

// Empirical autocovariance at an integer lag (biased estimator).
double empirical_autocov(const std::vector<double>& c, std::size_t lag) {
  double acc = 0.0;
  for (std::size_t i = lag; i < c.size(); ++i) acc += c[i] * c[i - lag];
  return acc / static_cast<double>(c.size());
}

}  // namespace

void Sample::validate(std::size_t min_length) const {
  if (times.size() != values.size()) throw ValidationError("Sample: times/values length mismatch");
  if (times.size() < min_length) {
    throw ValidationError("Sample: need at least " + std::to_string(min_length) + " observations");
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(values[i])) {
      throw ValidationError("Sample: non-finite entry at index " + std::to_string(i));
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw ValidationError("Sample: times not strictly increasing at index " + std::to_string(i));
    }
  }
}

bool Sample::equally_spaced() const {
  if (times.size() < 3) return true;
  const double step = times[1] - times[0];
  for (std::size_t i = 2; i < times.size(); ++i) {
    if (std::abs((times[i] - times[i - 1]) - step) > 1e-9 * step) return false;
  }
  return true;
}

double log_likelihood(const Sample& sample, const NouParams& params, LikelihoodMethod method) {
  sample.validate(1);
  params.validate();
  switch (method) {
    case LikelihoodMethod::automatic:
      return sample.equally_spaced() ? ll_toeplitz(sample, params) : ll_dense(sample, params);
    case LikelihoodMethod::toeplitz:
      if (!sample.equally_spaced()) {
        throw ValidationError("log_likelihood: Toeplitz route requires equally spaced times");
      }
      return ll_toeplitz(sample, params);
    case LikelihoodMethod::dense:
      return ll_dense(sample, params);
    case LikelihoodMethod::state_space:
      return ll_state_space(sample, params);
  }
  throw ValidationError("log_likelihood: unknown method");
}

std::array<double, 4> initial_guess(const Sample& sample) {
  const double mean = sample_mean(sample);
  std::vector<double> c(sample.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = sample.values[i] - mean;
  const double span = sample.times.back() - sample.times.front();
  const double step = span / static_cast<double>(sample.size() - 1);

  double qv = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) qv += (c[i] - c[i - 1]) * (c[i] - c[i - 1]);
  const double sigma0 = std::sqrt(qv / span);

  // first lag where the autocovariance falls below 1/e of the variance, then
  // the log-ratio between that lag and twice that lag
  const double c0 = empirical_autocov(c, 0);
  const std::size_t max_lag = c.size() / 2;
  std::size_t lag = 1;
  while (lag < max_lag && empirical_autocov(c, lag) > c0 / std::numbers::e) ++lag;
  double eta0 = 1.0 / (static_cast<double>(lag) * step);
  if (2 * lag < c.size()) {
    const double a = empirical_autocov(c, lag);
    const double b = empirical_autocov(c, 2 * lag);
    if (a > 0.0 && b > 0.0 && a > b) eta0 = std::log(a / b) / (static_cast<double>(lag) * step);
  }
  eta0 = std::clamp(eta0, 0.1 / span, 1.0 / step);
  return {2.0 * eta0, eta0, sigma0, sigma0};
}

FitResult fit_mle(const Sample& sample, const FitOptions& options) {
  sample.validate();
  const double mean = sample_mean(sample);
  double spread = 0.0;
  for (double v : sample.values) spread = std::max(spread, std::abs(v - mean));
  if (!(spread > 0.0)) {
    throw NumericalError("fit_mle: degenerate sample (zero variance); covariance is singular");
  }
  const auto start = options.initial.value_or(initial_guess(sample));
  for (double v : start) {
    if (!(v > 0.0)) throw ValidationError("fit_mle: initial guesses must be positive");
  }

  auto to_params = [&](const std::array<double, 4>& logx) {
    const double delta = std::exp(logx[0]);
    const double eta = std::exp(logx[1]);
    return NouParams{eta + delta, eta, std::exp(logx[2]), std::exp(logx[3]), mean};
  };
  const std::function<double(const std::array<double, 4>&)> objective =
      [&](const std::array<double, 4>& logx) {
        const NouParams p = to_params(logx);
        try {
          p.validate();
          return -log_likelihood(sample, p, options.method);
        } catch (const std::exception&) {
          return std::numeric_limits<double>::infinity();
        }
      };

  std::array<double, 4> log_start;
  for (std::size_t i = 0; i < 4; ++i) log_start[i] = std::log(start[i]);

  Rng rng(options.seed);
  FitResult best;
  double best_value = std::numeric_limits<double>::infinity();
  std::array<double, 4> best_x = log_start;
  const int restarts = std::max(1, options.restarts);
  for (int r = 0; r < restarts; ++r) {
    std::array<double, 4> x0 = log_start;
    if (r > 0) {
      for (double& v : x0) v += 0.5 * rng.normal();
    }
    const auto run = detail::nelder_mead<4>(objective, x0, 0.5, options.max_evaluations,
                                            options.tolerance, 1e-7);
    best.iterations += run.evaluations;
    if (run.f < best_value) {
      best_value = run.f;
      best_x = run.x;
      best.converged = run.converged;
    }
  }
  if (!std::isfinite(best_value)) {
    throw NumericalError("fit_mle: no admissible parameter set found");
  }
  best.params = to_params(best_x);
  best.log_likelihood = -best_value;
  return best;
}

YieldEstimate estimate_yield(const Sample& prices) {
  if (prices.size() < 2) throw ValidationError("estimate_yield: need at least 2 points");
  prices.validate(2);
  const std::size_t n = prices.size();
  std::vector<double> t(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(prices.values[i] > 0.0)) {
      throw ValidationError("estimate_yield: non-positive price at index " + std::to_string(i));
    }
    t[i] = (prices.times[i] - prices.times[0]) / kDaysPerYear;
    y[i] = std::log(prices.values[i]);
  }
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tm += t[i];
    ym += y[i];
  }
  tm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (t[i] - tm) * (t[i] - tm);
    sxy += (t[i] - tm) * (y[i] - ym);
  }
  YieldEstimate out;
  out.r = sxy / sxx;
  out.intercept = ym - out.r * tm;
  if (n > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - out.intercept - out.r * t[i];
      ssr += e * e;
    }
    out.residual_std = std::sqrt(ssr / static_cast<double>(n - 2));
  }
  return out;
}

Sample discount_series(const Sample& sample, double r) {
  if (!std::isfinite(r)) throw ValidationError("discount_series: non-finite rate");
  sample.validate(1);
  Sample out = sample;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] *= std::exp(-r * (out.times[i] - out.times[0]) / kDaysPerYear);
  }
  return out;
}

void to_json(nlohmann::json& j, const NouParams& p) {
  j = nlohmann::json{{"kappa", p.kappa}, {"eta", p.eta}, {"sigma", p.sigma}, {"nu", p.nu},
                     {"u_bar", p.u_bar}};
}

void to_json(nlohmann::json& j, const FitResult& fit) {
  to_json(j, fit.params);
  j["log_likelihood"] = fit.log_likelihood;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
}

void to_json(nlohmann::json& j, const YieldEstimate& y) {
  j = nlohmann::json{{"r", y.r}, {"intercept", y.intercept}, {"residual_std", y.residual_std}};
}

NouParams params_from_json(const nlohmann::json& j, bool for_simulation) {
  if (j.is_string()) return preset_by_name(j.get<std::string>());
  if (!j.is_object()) throw ValidationError("model parameters: expected an object or preset name");
  NouParams p;
  const auto field = [&](const char* name) {
    if (!j.contains(name) || !j.at(name).is_number()) {
      throw ValidationError(std::string("model parameters: missing or non-numeric field '") + name + "'");
    }
    return j.at(name).get<double>();
  };
  p.kappa = field("kappa");
  p.eta = field("eta");
  p.sigma = field("sigma");
  p.nu = field("nu");
  p.u_bar = field("u_bar");
  if (for_simulation) {
    p.validate_for_simulation();
  } else {
    p.validate();
  }
  return p;
}

}  // namespace pegamm
