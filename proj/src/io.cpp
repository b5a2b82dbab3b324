#include "pegamm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "pegamm/errors.hpp"
#include "pegamm/util.hpp"

namespace pegamm {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ValidationError(where + ": cannot parse '" + text + "' as a number");
  }
  return value;
}

// Nearest grid index for timestamps that should sit on a common grid.
bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

void reject_unknown_keys(const nlohmann::json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ValidationError(where + ": unknown field '" + key + "'");
    }
  }
}

template <class T>
T get_field(const nlohmann::json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

void RawSeries::validate() const {
  const std::string name = label.empty() ? "series" : label;
  if (timestamps.size() != prices.size()) throw ValidationError(name + ": length mismatch");
  if (timestamps.empty()) throw ValidationError(name + ": empty series");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(timestamps[i]) || !std::isfinite(prices[i])) {
      throw ValidationError(name + ": non-finite entry at row " + std::to_string(i + 1));
    }
    if (!(prices[i] > 0.0)) {
      throw ValidationError(name + ": non-positive price at row " + std::to_string(i + 1));
    }
    if (i > 0 && timestamps[i] < timestamps[i - 1]) {
      throw ValidationError(name + ": timestamps decrease at row " + std::to_string(i + 1));
    }
  }
}

RawSeries read_raw_series_csv(std::istream& in, const std::string& label) {
  RawSeries series;
  series.label = label;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    const std::string where = label + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (fields.size() != 2 || fields[0] != "timestamp" || fields[1] != "price") {
        throw ValidationError(where + ": expected header 'timestamp,price'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 2) {
      throw ValidationError(where + ": expected 2 fields, found " + std::to_string(fields.size()));
    }
    const double ts = parse_number(fields[0], where + ": field 'timestamp'");
    const double price = parse_number(fields[1], where + ": field 'price'");
    if (!std::isfinite(ts)) throw ValidationError(where + ": field 'timestamp': not finite");
    if (!std::isfinite(price) || !(price > 0.0)) {
      throw ValidationError(where + ": field 'price': must be a positive finite number");
    }
    if (!series.timestamps.empty() && ts < series.timestamps.back()) {
      throw ValidationError(where + ": field 'timestamp': decreases from the previous row");
    }
    series.timestamps.push_back(ts);
    series.prices.push_back(price);
  }
  if (!header_seen) throw ValidationError(label + ": empty file, expected header 'timestamp,price'");
  if (series.timestamps.empty()) throw ValidationError(label + ": no data rows");
  return series;
}

RawSeries read_raw_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  return read_raw_series_csv(in, path.string());
}

void write_raw_series_csv(std::ostream& out, const RawSeries& series) {
  out << "timestamp,price\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << fmt_double(series.timestamps[i]) << ',' << fmt_double(series.prices[i]) << '\n';
  }
}

RawSeries resample_ffill(const RawSeries& series, double step) {
  series.validate();
  return resample_ffill(series, step, series.timestamps.front(), series.timestamps.back());
}

RawSeries resample_ffill(const RawSeries& series, double step, double start, double end) {
  series.validate();
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("resample: step must be > 0");
  if (start < series.timestamps.front()) {
    throw ValidationError("resample: grid starts before the first observation of " + series.label);
  }
  if (end < start) throw ValidationError("resample: grid end precedes its start");
  RawSeries out;
  out.label = series.label;
  const auto n = static_cast<std::size_t>(std::floor((end - start) / step * (1.0 + 1e-12))) + 1;
  out.timestamps.reserve(n);
  out.prices.reserve(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = start + static_cast<double>(k) * step;
    while (j + 1 < series.size() && series.timestamps[j + 1] <= t) ++j;
    out.timestamps.push_back(t);
    out.prices.push_back(series.prices[j]);
  }
  return out;
}

RawSeries cross_rate(const RawSeries& numerator, const RawSeries& denominator) {
  numerator.validate();
  denominator.validate();
  RawSeries out;
  out.label = numerator.label + "/" + denominator.label;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < numerator.size() && j < denominator.size()) {
    const double a = numerator.timestamps[i];
    const double b = denominator.timestamps[j];
    if (same_time(a, b)) {
      if (denominator.prices[j] == 0.0) {
        throw ValidationError("cross_rate: zero denominator at timestamp " + fmt_double(b));
      }
      out.timestamps.push_back(a);
      out.prices.push_back(numerator.prices[i] / denominator.prices[j]);
      ++i;
      ++j;
    } else if (a < b) {
      ++i;
    } else {
      ++j;
    }
  }
  if (out.timestamps.empty()) {
    throw ValidationError("cross_rate: " + numerator.label + " and " + denominator.label +
                          " have no common timestamps");
  }
  return out;
}

Sample to_sample(const RawSeries& series) {
  series.validate();
  Sample s;
  s.times.reserve(series.size());
  s.values = series.prices;
  const double t0 = series.timestamps.front();
  for (double ts : series.timestamps) s.times.push_back((ts - t0) / 86400.0);
  return s;
}

double parse_duration_seconds(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ValidationError("duration: empty value");
  double scale = 1.0;
  std::string number = t;
  switch (t.back()) {
    case 's': number.pop_back(); break;
    case 'm': scale = 60.0; number.pop_back(); break;
    case 'h': scale = 3600.0; number.pop_back(); break;
    case 'd': scale = 86400.0; number.pop_back(); break;
    default: break;
  }
  const double value = parse_number(number, "duration '" + t + "'") * scale;
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ValidationError("duration '" + t + "': must be positive");
  }
  return value;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ValidationError(path.string() + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw ValidationError(path.string() + ": write failed");
}

PathSetup RunConfig::path_setup() const {
  PathSetup setup;
  setup.prices = SimulatedPrices{simulation.price_params.value_or(model), simulation.start};
  setup.model = model;
  setup.liquidity = liquidity;
  setup.dt = simulation.dt_seconds / 86400.0;
  setup.horizon = simulation.horizon_days;
  return setup;
}

FrontierSetup RunConfig::frontier_setup() const { return {path_setup(), control}; }

RunConfig run_config_from_json(const nlohmann::json& j, const std::string& source) {
  if (!j.is_object()) throw ValidationError(source + ": expected a JSON object");
  reject_unknown_keys(j, source, {"$schema", "description", "model", "liquidity", "control",
                                  "simulation", "strategy", "replay", "gammas"});
  RunConfig cfg;
  const auto wrap = [&](const std::string& section, auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": " + section + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(source + ": " + section + ": " + e.what());
    }
  };

  if (!j.contains("model")) throw ValidationError(source + ": missing field 'model'");
  wrap("model", [&] { cfg.model = params_from_json(j.at("model")); });
  if (!j.contains("liquidity")) throw ValidationError(source + ": missing field 'liquidity'");
  wrap("liquidity", [&] { cfg.liquidity = liquidity_from_json(j.at("liquidity")); });

  if (j.contains("control")) {
    const auto& c = j.at("control");
    const std::string where = source + ": control";
    if (!c.is_object()) throw ValidationError(where + ": expected an object");
    reject_unknown_keys(c, where, {"gamma", "horizon_days", "grid_n", "ergodic"});
    cfg.control.gamma = get_field(c, "gamma", where, cfg.control.gamma);
    cfg.control.horizon_T = get_field(c, "horizon_days", where, cfg.control.horizon_T);
    cfg.control.grid_n = get_field(c, "grid_n", where, cfg.control.grid_n);
    cfg.control.ergodic = get_field(c, "ergodic", where, cfg.control.ergodic);
  }
  wrap("control", [&] { cfg.control.validate(); });

  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    const std::string where = source + ": simulation";
    if (!s.is_object()) throw ValidationError(where + ": expected an object");
    reject_unknown_keys(s, where, {"dt_seconds", "horizon_days", "n_paths", "seed", "start", "price_model"});
    auto& sim = cfg.simulation;
    sim.dt_seconds = get_field(s, "dt_seconds", where, sim.dt_seconds);
    sim.horizon_days = get_field(s, "horizon_days", where, sim.horizon_days);
    sim.n_paths = get_field(s, "n_paths", where, sim.n_paths);
    sim.seed = get_field(s, "seed", where, sim.seed);
    const auto start = get_field<std::string>(s, "start", where, "stationary");
    if (start == "stationary") {
      sim.start = StartMode::stationary;
    } else if (start == "peg") {
      sim.start = StartMode::peg;
    } else {
      throw ValidationError(where + ": field 'start': expected 'stationary' or 'peg'");
    }
    if (s.contains("price_model")) {
      wrap("simulation: price_model", [&] { sim.price_params = params_from_json(s.at("price_model"), true); });
    }
    if (!(sim.dt_seconds > 0.0)) throw ValidationError(where + ": field 'dt_seconds': must be > 0");
    if (!(sim.horizon_days > 0.0)) throw ValidationError(where + ": field 'horizon_days': must be > 0");
    if (sim.n_paths < 1) throw ValidationError(where + ": field 'n_paths': must be >= 1");
  }

  if (j.contains("strategy")) {
    const auto& s = j.at("strategy");
    const std::string where = source + ": strategy";
    if (!s.is_object()) throw ValidationError(where + ": expected an object");
    reject_unknown_keys(s, where, {"type", "delta"});
    const auto kind = get_field<std::string>(s, "type", where, "greedy");
    if (kind == "greedy") {
      cfg.strategy.kind = StrategyConfig::Kind::greedy;
    } else if (kind == "constant") {
      cfg.strategy.kind = StrategyConfig::Kind::constant;
      if (!s.contains("delta")) throw ValidationError(where + ": constant strategy needs 'delta'");
    } else if (kind == "none") {
      cfg.strategy.kind = StrategyConfig::Kind::none;
    } else {
      throw ValidationError(where + ": field 'type': expected 'greedy', 'constant' or 'none'");
    }
    cfg.strategy.delta = get_field(s, "delta", where, 0.0);
    if (!std::isfinite(cfg.strategy.delta)) throw ValidationError(where + ": field 'delta': not finite");
  }

  if (j.contains("replay")) {
    const auto& r = j.at("replay");
    const std::string where = source + ": replay";
    if (!r.is_object()) throw ValidationError(where + ": expected an object");
    reject_unknown_keys(r, where, {"resample", "detrend_yield"});
    if (r.contains("resample")) {
      const auto& v = r.at("resample");
      wrap("replay: resample", [&] {
        cfg.replay.resample_seconds =
            v.is_number() ? v.get<double>() : parse_duration_seconds(v.get<std::string>());
      });
      if (!(cfg.replay.resample_seconds > 0.0)) throw ValidationError(where + ": field 'resample': must be > 0");
    }
    cfg.replay.detrend_yield = get_field(r, "detrend_yield", where, false);
  }

  if (j.contains("gammas")) {
    cfg.gammas = get_field<std::vector<double>>(j, "gammas", source, {});
    for (double g : cfg.gammas) {
      if (!(g > 0.0) || !std::isfinite(g)) throw ValidationError(source + ": gammas: entries must be > 0");
    }
  }

  if (!cfg.control.ergodic && cfg.control.horizon_T < cfg.simulation.horizon_days * (1.0 - 1e-12)) {
    throw ValidationError(source + ": control.horizon_days must cover simulation.horizon_days");
  }
  wrap("simulation", [&] { cfg.path_setup().validate(); });
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), path.string());
}

}  // namespace pegamm
