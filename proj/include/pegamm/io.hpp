#pragma once

/**
 * @file io.hpp
 * @brief Price-series ingestion, forward-fill resampling, cross rates and
 * run configuration.
 *
 * Raw series are `timestamp,price` CSV files with epoch-second timestamps.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegamm/amm_sim.hpp"
#include "pegamm/calibrate.hpp"
#include "pegamm/control.hpp"
#include "pegamm/intensity.hpp"
#include "pegamm/model.hpp"

namespace pegamm {

struct RawSeries {
  std::vector<double> timestamps;  ///< epoch seconds, non-decreasing
  std::vector<double> prices;      ///< > 0
  std::string label;

  std::size_t size() const { return timestamps.size(); }
  void validate() const;
};

RawSeries read_raw_series_csv(std::istream& in, const std::string& label);
RawSeries read_raw_series_csv(const std::filesystem::path& path);
void write_raw_series_csv(std::ostream& out, const RawSeries& series);

/// Uniform grid of spacing `step` seconds from the first to the last
/// timestamp; each point takes the last observation at or before it.
RawSeries resample_ffill(const RawSeries& series, double step);

/// Forward fill onto the grid start, start + step, ..., <= end. Grid points
/// before the first observation are an error.
RawSeries resample_ffill(const RawSeries& series, double step, double start, double end);

/// Pointwise numerator / denominator on the common timestamps.
RawSeries cross_rate(const RawSeries& numerator, const RawSeries& denominator);

/// Times in days since the first timestamp.
Sample to_sample(const RawSeries& series);

/// Parses "900", "900s", "15m", "1h" or "1d" into seconds.
double parse_duration_seconds(const std::string& text);

/// Parses a JSON file; syntax errors name the file and line.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes text to a file, throwing ValidationError if it cannot be opened.
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct SimulationConfig {
  double dt_seconds = 10.0;
  double horizon_days = 1.0;
  int n_paths = 300;
  std::uint64_t seed = 1;
  StartMode start = StartMode::stationary;
  std::optional<NouParams> price_params;  ///< defaults to the model
};

struct StrategyConfig {
  enum class Kind { greedy, constant, none } kind = Kind::greedy;
  double delta = 0.0;  ///< markup of the constant strategy
};

struct ReplayConfig {
  double resample_seconds = 900.0;
  bool detrend_yield = false;
};

struct RunConfig {
  NouParams model;
  LiquiditySpec liquidity;
  ControlConfig control;
  SimulationConfig simulation;
  StrategyConfig strategy;
  ReplayConfig replay;
  std::vector<double> gammas;

  /// Path setup for simulated prices (strategy left as no-quote).
  PathSetup path_setup() const;
  FrontierSetup frontier_setup() const;
};

/// Builds and validates a RunConfig. `source` names the document in errors.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace pegamm
