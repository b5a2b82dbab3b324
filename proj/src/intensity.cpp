#include "pegamm/intensity.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "pegamm/errors.hpp"

namespace pegamm {

namespace {

// 1 / (1 + exp(-x)) without overflow
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_hamiltonian_args(const SideIntensity& side, double z, double p, double gamma) {
  side.validate();
  if (!(z > 0.0) || !std::isfinite(z)) throw ValidationError("hamiltonian: z must be > 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("hamiltonian: gamma must be > 0");
  if (!std::isfinite(p)) throw ValidationError("hamiltonian: p must be finite");
}

}  // namespace

std::string_view side_label(Side side) { return side == Side::bid ? "1,0" : "0,1"; }

void SideIntensity::validate() const {
  if (!(lam > 0.0) || !std::isfinite(lam)) throw ValidationError("intensity: lambda must be > 0");
  if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("intensity: b must be > 0");
  if (!std::isfinite(a)) throw ValidationError("intensity: a must be finite");
}

void SizeMeasure::validate() const {
  if (atoms.empty()) throw ValidationError("size measure: no atoms");
  std::set<double> seen;
  for (const auto& atom : atoms) {
    if (!(atom.z > 0.0) || !std::isfinite(atom.z)) throw ValidationError("size measure: z must be > 0");
    if (!(atom.w > 0.0) || !std::isfinite(atom.w)) throw ValidationError("size measure: w must be > 0");
    if (!seen.insert(atom.z).second) {
      throw ValidationError("size measure: duplicate atom z=" + std::to_string(atom.z));
    }
  }
}

void LiquiditySpec::validate() const {
  bid.validate();
  ask.validate();
  sizes.validate();
}

LiquiditySpec symmetric_liquidity(double lam, double a, double b, double z) {
  LiquiditySpec spec{{lam, a, b}, {lam, a, b}, {{{z, 1.0}}}};
  spec.validate();
  return spec;
}

LiquiditySpec liquidity_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("liquidity: expected a JSON object");
  const auto num = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw ValidationError(std::string("liquidity: missing or non-numeric field '") + key + "'");
    }
    return j.at(key).get<double>();
  };
  LiquiditySpec spec;
  spec.ask = {num("lambda_01"), num("a_01"), num("b_01")};
  spec.bid = {num("lambda_10"), num("a_10"), num("b_10")};
  if (!j.contains("sizes") || !j.at("sizes").is_array()) {
    throw ValidationError("liquidity: missing array field 'sizes'");
  }
  for (const auto& item : j.at("sizes")) {
    if (item.is_number()) {
      spec.sizes.atoms.push_back({item.get<double>(), 1.0});
    } else if (item.is_object() && item.contains("z") && item.at("z").is_number()) {
      const double w = item.contains("w") ? item.at("w").get<double>() : 1.0;
      spec.sizes.atoms.push_back({item.at("z").get<double>(), w});
    } else {
      throw ValidationError("liquidity: field 'sizes' entries must be numbers or {z, w} objects");
    }
  }
  spec.validate();
  return spec;
}

void to_json(nlohmann::json& j, const LiquiditySpec& spec) {
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& atom : spec.sizes.atoms) sizes.push_back({{"z", atom.z}, {"w", atom.w}});
  j = nlohmann::json{{"lambda_01", spec.ask.lam}, {"a_01", spec.ask.a}, {"b_01", spec.ask.b},
                     {"lambda_10", spec.bid.lam}, {"a_10", spec.bid.a}, {"b_10", spec.bid.b},
                     {"sizes", sizes}};
}

double intensity(const SideIntensity& side, double /*z*/, double delta) {
  if (std::isnan(delta)) throw ValidationError("intensity: markup is NaN");
  return side.lam * logistic(-(side.a + side.b * delta));
}

double inverse_intensity(const SideIntensity& side, double /*z*/, double y) {
  if (!(y > 0.0) || !(y < side.lam)) {
    throw ValidationError("inverse_intensity: rate " + std::to_string(y) + " outside (0, lambda)");
  }
  return (std::log(side.lam / y - 1.0) - side.a) / side.b;
}

HamiltonianValue hamiltonian(const SideIntensity& side, double z, double p, double gamma) {
  check_hamiltonian_args(side, z, p, gamma);
  const double c = gamma * z;
  // FOC divided by Lambda(delta) > 0; strictly decreasing for delta > p,
  // positive (= c) at delta = p.
  const auto foc = [&](double delta) {
    const double x = c * (delta - p);
    return -side.b * logistic(side.a + side.b * delta) * -std::expm1(-x) + c * std::exp(-x);
  };
  double lo = p;
  double width = 50.0 / side.b;
  double hi = p + width;
  int expansions = 0;
  while (foc(hi) > 0.0) {
    lo = hi;
    width *= 2.0;
    hi = p + width;
    if (++expansions > 200 || !std::isfinite(hi)) {
      throw NumericalError("hamiltonian: failed to bracket the first-order condition (p=" +
                           std::to_string(p) + ")");
    }
  }
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (foc(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  HamiltonianValue out;
  out.delta_star = 0.5 * (lo + hi);
  const double rate = intensity(side, z, out.delta_star);
  const double x = c * (out.delta_star - p);
  out.h = rate / c * -std::expm1(-x);
  out.dh_dp = -rate * std::exp(-x);
  return out;
}

double optimal_markup(const SideIntensity& side, double z, double p, double gamma) {
  const auto hv = hamiltonian(side, z, p, gamma);
  return inverse_intensity(side, z, gamma * z * hv.h - hv.dh_dp);
}

QuadCoeffs quad_fit(const SideIntensity& side, double z, double gamma) {
  const auto at0 = hamiltonian(side, z, 0.0, gamma);
  const double h = 1e-2 / side.b;
  const auto slope_diff = [&](double step) {
    return (hamiltonian(side, z, step, gamma).dh_dp - hamiltonian(side, z, -step, gamma).dh_dp) /
           (2.0 * step);
  };
  QuadCoeffs q;
  q.alpha0 = at0.h;
  q.alpha1 = at0.dh_dp;
  q.alpha2 = (4.0 * slope_diff(0.5 * h) - slope_diff(h)) / 3.0;
  return q;
}

}  // namespace pegamm
