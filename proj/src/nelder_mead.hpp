#pragma once

// Derivative-free simplex minimizer (Nelder-Mead with standard coefficients).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace pegamm::detail {

template <std::size_t N>
struct SimplexResult {
  std::array<double, N> x{};
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

template <std::size_t N>
SimplexResult<N> nelder_mead(const std::function<double(const std::array<double, N>&)>& f,
                             const std::array<double, N>& start, double step, int max_evals,
                             double ftol, double xtol) {
  using Point = std::array<double, N>;
  std::array<Point, N + 1> pts;
  std::array<double, N + 1> vals;
  int evals = 0;
  auto eval = [&](const Point& p) {
    ++evals;
    const double v = f(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  pts[0] = start;
  vals[0] = eval(start);
  for (std::size_t i = 0; i < N; ++i) {
    pts[i + 1] = start;
    pts[i + 1][i] += step;
    vals[i + 1] = eval(pts[i + 1]);
  }
  std::array<std::size_t, N + 1> order;
  SimplexResult<N> out;
  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[N - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= N; ++i) {
      for (std::size_t k = 0; k < N; ++k) {
        diameter = std::max(diameter, std::abs(pts[i][k] - pts[best][k]));
      }
    }
    const double spread = vals[worst] - vals[best];
    if (std::isfinite(vals[best]) && spread <= ftol * std::max(1.0, std::abs(vals[best])) &&
        diameter <= xtol) {
      out.converged = true;
      break;
    }
    if (evals >= max_evals) break;

    Point centroid{};
    for (std::size_t i = 0; i <= N; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < N; ++k) centroid[k] += pts[i][k] / static_cast<double>(N);
    }
    auto along = [&](double t) {
      Point p;
      for (std::size_t k = 0; k < N; ++k) p[k] = centroid[k] + t * (pts[worst][k] - centroid[k]);
      return p;
    };
    const Point reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < vals[best]) {
      const Point expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Point contracted = along(outside ? -0.5 : 0.5);
    const double fc = eval(contracted);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= N; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < N; ++k) pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto best_it = std::min_element(vals.begin(), vals.end());
  out.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
  out.f = *best_it;
  out.evaluations = evals;
  return out;
}

}  // namespace pegamm::detail
