// Command-line front end: ingestion, calibration, filtering, quoting and
// simulation experiments. Exit codes: 0 success, 2 invalid input, 3 numerical
// failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegamm/amm_sim.hpp"
#include "pegamm/calibrate.hpp"
#include "pegamm/control.hpp"
#include "pegamm/errors.hpp"
#include "pegamm/filter.hpp"
#include "pegamm/intensity.hpp"
#include "pegamm/io.hpp"
#include "pegamm/rng.hpp"
#include "pegamm/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pegamm;

namespace {

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(what + ": cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw ValidationError(what + ": empty list");
  return out;
}

// Model parameters from a JSON file or a preset name.
NouParams load_params(const std::string& arg) {
  if (!fs::exists(arg)) {
    try {
      return preset_by_name(arg);
    } catch (const ValidationError&) {
      throw ValidationError(arg + ": no such file or preset");
    }
  }
  const json j = read_json_file(arg);
  try {
    return params_from_json(j.is_object() && j.contains("model") ? j.at("model") : j);
  } catch (const ValidationError& e) {
    throw ValidationError(arg + ": " + e.what());
  }
}

LiquiditySpec load_liquidity(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return liquidity_from_json(j.is_object() && j.contains("liquidity") ? j.at("liquidity") : j);
  } catch (const std::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

Sample load_sample(const std::string& path, std::optional<double> resample_seconds) {
  RawSeries raw = read_raw_series_csv(fs::path(path));
  if (resample_seconds) raw = resample_ffill(raw, *resample_seconds);
  return to_sample(raw);
}

int cmd_ingest(const std::string& num, const std::string& den, const std::string& step_text,
               const std::string& out) {
  const double step = parse_duration_seconds(step_text);
  const RawSeries a = read_raw_series_csv(fs::path(num));
  const RawSeries b = read_raw_series_csv(fs::path(den));
  const double start = std::max(a.timestamps.front(), b.timestamps.front());
  const double end = std::min(a.timestamps.back(), b.timestamps.back());
  if (start > end) throw ValidationError("ingest: " + num + " and " + den + " do not overlap in time");
  const RawSeries ratio = cross_rate(resample_ffill(a, step, start, end), resample_ffill(b, step, start, end));
  std::ostringstream text;
  write_raw_series_csv(text, ratio);
  write_text_file(out, text.str());
  return 0;
}

int cmd_calibrate(const std::string& data, const std::string& resample, bool detrend,
                  const std::string& out, std::uint64_t seed, int restarts) {
  const double step = parse_duration_seconds(resample);
  Sample sample = load_sample(data, step);
  json result;
  if (detrend) {
    const YieldEstimate y = estimate_yield(sample);
    result["yield"] = y;
    sample = discount_series(sample, y.r);
  }
  result["n_obs"] = sample.size();
  result["resample_seconds"] = step;
  FitOptions options;
  options.seed = seed;
  options.restarts = restarts;
  try {
    const FitResult fit = fit_mle(sample, options);
    json fitted = fit;
    fitted.update(result);
    write_text_file(out, json_text(fitted));
  } catch (const NumericalError& e) {
    result["fit_error"] = e.what();
    write_text_file(out, json_text(result));
    throw;
  }
  return 0;
}

int cmd_filter(const std::string& data, const std::string& params_arg,
               const std::optional<std::string>& resample, const std::string& out) {
  const NouParams params = load_params(params_arg);
  const Sample sample =
      load_sample(data, resample ? std::optional<double>(parse_duration_seconds(*resample)) : std::nullopt);
  sample.validate(2);
  const auto states = filter_series(sample, params);
  std::ostringstream text;
  text << "t,s,u_hat,v\n";
  for (std::size_t i = 0; i < states.size(); ++i) {
    text << fmt_double(sample.times[i]) << ',' << fmt_double(sample.values[i]) << ','
         << fmt_double(states[i].u_hat) << ',' << fmt_double(states[i].v) << '\n';
  }
  write_text_file(out, text.str());
  return 0;
}

struct QuoteArgs {
  std::string params;
  std::string liquidity;
  double gamma = 0.0;
  bool ergodic = false;
  std::string state;
  std::string sizes;
  std::string coeffs;
  std::string save_coeffs;
  double horizon = 1.0;
  int grid = 10001;
  std::string out;
};

int cmd_quote(const QuoteArgs& q) {
  const LiquiditySpec liquidity = load_liquidity(q.liquidity);
  const auto state = parse_list(q.state, "--state");
  if (state.size() != 4) throw ValidationError("--state: expected y1,S,u_hat,t");
  const double y1 = state[0], s = state[1], u_hat = state[2], t = state[3];
  std::vector<double> sizes;
  if (q.sizes.empty()) {
    for (const auto& atom : liquidity.sizes.atoms) sizes.push_back(atom.z);
  } else {
    sizes = parse_list(q.sizes, "--sizes");
  }
  for (double z : sizes) {
    if (!(z > 0.0)) throw ValidationError("--sizes: sizes must be > 0");
  }

  ControlCoeffs coeffs;
  if (!q.coeffs.empty()) {
    try {
      coeffs = control_from_json(read_json_file(q.coeffs));
    } catch (const ValidationError& e) {
      throw ValidationError(q.coeffs + ": " + e.what());
    }
  } else {
    if (q.params.empty()) throw ValidationError("quote: --params is required without --coeffs");
    if (!(q.gamma > 0.0)) throw ValidationError("--gamma: must be > 0");
    ControlConfig cfg;
    cfg.gamma = q.gamma;
    cfg.ergodic = q.ergodic;
    cfg.horizon_T = q.horizon;
    cfg.grid_n = q.grid;
    cfg.validate();
    const FilteredNouParams fp = filtered_params(load_params(q.params));
    const DeltaMoments deltas = delta_moments(liquidity, q.gamma);
    coeffs = q.ergodic ? ergodic_control(fp, cfg, deltas) : solve_control(fp, cfg, deltas);
  }
  if (!q.save_coeffs.empty()) write_text_file(q.save_coeffs, json_text(json(coeffs)));

  json quotes = json::array();
  for (double z : sizes) {
    quotes.push_back({{"z", z},
                      {"bid", greedy_markups(coeffs, liquidity, t, y1, s, u_hat, z, Side::bid)},
                      {"ask", greedy_markups(coeffs, liquidity, t, y1, s, u_hat, z, Side::ask)}});
  }
  const json result = {{"gamma", coeffs.gamma},
                       {"ergodic", coeffs.ergodic},
                       {"state", {{"y1", y1}, {"s", s}, {"u_hat", u_hat}, {"t", t}}},
                       {"quotes", quotes}};
  if (q.out.empty()) {
    std::cout << json_text(result);
  } else {
    write_text_file(q.out, json_text(result));
  }
  return 0;
}

Strategy strategy_from_config(const RunConfig& cfg) {
  switch (cfg.strategy.kind) {
    case StrategyConfig::Kind::greedy:
      return make_greedy(cfg.frontier_setup(), cfg.control.gamma);
    case StrategyConfig::Kind::constant:
      return ConstantStrategy{cfg.strategy.delta};
    case StrategyConfig::Kind::none:
      break;
  }
  return NoQuoteStrategy{};
}

int cmd_simulate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  const RunConfig cfg = load_run_config(config);
  PathSetup setup = cfg.path_setup();
  setup.strategy = strategy_from_config(cfg);
  setup.record_events = true;
  setup.record_states = true;
  setup.check_bookkeeping = true;
  const std::uint64_t path_seed = seed.value_or(cfg.simulation.seed);
  const PathResult result = run_path(setup, derive_seed(path_seed, 0));

  fs::create_directories(out);
  std::ostringstream events;
  write_events_csv(events, result.events);
  write_text_file(fs::path(out) / "events.csv", events.str());

  std::ostringstream path;
  path << "t,s,u_hat,x,y0,y1,excess_pnl\n";
  for (const auto& st : result.states) {
    path << fmt_double(st.t) << ',' << fmt_double(st.s) << ',' << fmt_double(st.u_hat) << ','
         << fmt_double(st.x) << ',' << fmt_double(st.y0) << ',' << fmt_double(st.y1) << ','
         << fmt_double(excess_pnl(st)) << '\n';
  }
  write_text_file(fs::path(out) / "prices.csv", path.str());

  const auto& term = result.terminal;
  const json summary = {{"seed", path_seed},
                        {"excess_pnl", result.excess_pnl},
                        {"trades_bid", result.trades_bid},
                        {"trades_ask", result.trades_ask},
                        {"terminal",
                         {{"t", term.t}, {"x", term.x}, {"y0", term.y0}, {"y1", term.y1},
                          {"q0", term.q0}, {"q1", term.q1}, {"s", term.s}, {"u_hat", term.u_hat}}}};
  write_text_file(fs::path(out) / "summary.json", json_text(summary));
  return 0;
}

std::vector<double> gamma_grid(const RunConfig& cfg, const std::string& arg) {
  std::vector<double> gammas = arg.empty() ? cfg.gammas : parse_list(arg, "--gammas");
  if (gammas.empty()) throw ValidationError("frontier: no gammas given (use --gammas or 'gammas' in the config)");
  for (double g : gammas) {
    if (!(g > 0.0)) throw ValidationError("--gammas: entries must be > 0");
  }
  return gammas;
}

void write_frontier(const std::string& out, const std::vector<FrontierPoint>& points) {
  std::ostringstream text;
  write_frontier_csv(text, points);
  write_text_file(out, text.str());
}

int cmd_frontier(const std::string& config, const std::string& gammas_arg, std::optional<int> paths,
                 std::optional<std::uint64_t> seed, const std::string& out) {
  const RunConfig cfg = load_run_config(config);
  const auto gammas = gamma_grid(cfg, gammas_arg);
  const auto points = frontier(cfg.frontier_setup(), gammas, paths.value_or(cfg.simulation.n_paths),
                               seed.value_or(cfg.simulation.seed));
  write_frontier(out, points);
  return 0;
}

int cmd_replay(const std::string& data, const std::string& config, const std::string& gammas_arg,
               std::optional<int> starts, std::optional<std::uint64_t> seed, const std::string& out) {
  const RunConfig cfg = load_run_config(config);
  const auto gammas = gamma_grid(cfg, gammas_arg);
  Sample sample = load_sample(data, cfg.replay.resample_seconds);
  if (cfg.replay.detrend_yield) sample = discount_series(sample, estimate_yield(sample).r);
  const auto series = std::make_shared<const Sample>(std::move(sample));
  const auto points = historical_replay(series, cfg.frontier_setup(), gammas,
                                        starts.value_or(cfg.simulation.n_paths),
                                        seed.value_or(cfg.simulation.seed));
  write_frontier(out, points);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peg-aware AMM toolkit: calibration, filtering, quoting and simulation"};
  app.require_subcommand(1);

  std::string num, den, step = "1s", out;
  auto* ingest = app.add_subcommand("ingest", "Resample two USD feeds and write their cross rate");
  ingest->add_option("--num", num, "Numerator series (timestamp,price CSV)")->required();
  ingest->add_option("--den", den, "Denominator series (timestamp,price CSV)")->required();
  ingest->add_option("--step", step, "Grid step, e.g. 1s, 15m")->capture_default_str();
  ingest->add_option("--out", out, "Output CSV")->required();

  std::string data, resample = "15m";
  bool detrend = false;
  std::uint64_t fit_seed = 7;
  int restarts = 5;
  auto* calibrate = app.add_subcommand("calibrate", "Maximum-likelihood fit of the nested OU model");
  calibrate->add_option("--data", data, "Price series (timestamp,price CSV)")->required();
  calibrate->add_option("--resample", resample, "Resampling step")->capture_default_str();
  calibrate->add_flag("--detrend-yield", detrend, "Estimate and remove an exponential yield first");
  calibrate->add_option("--seed", fit_seed, "Seed for optimizer restarts")->capture_default_str();
  calibrate->add_option("--restarts", restarts, "Optimizer restarts")->capture_default_str();
  calibrate->add_option("--out", out, "Output JSON")->required();

  std::string params;
  std::optional<std::string> filter_resample;
  auto* filter = app.add_subcommand("filter", "Filter the latent peg from a price series");
  filter->add_option("--data", data, "Price series (timestamp,price CSV)")->required();
  filter->add_option("--params", params, "Parameter JSON or preset name")->required();
  filter->add_option("--resample", filter_resample, "Optional resampling step");
  filter->add_option("--out", out, "Output CSV (t,s,u_hat,v)")->required();

  QuoteArgs q;
  auto* quote = app.add_subcommand("quote", "Greedy bid/ask markups at a given state");
  quote->add_option("--params", q.params, "Parameter JSON or preset name");
  quote->add_option("--liquidity", q.liquidity, "Liquidity JSON")->required();
  quote->add_option("--gamma", q.gamma, "Risk aversion (1/quote)");
  quote->add_flag("--ergodic", q.ergodic, "Use the long-horizon coefficients");
  quote->add_option("--state", q.state, "y1,S,u_hat,t")->required();
  quote->add_option("--sizes", q.sizes, "Trade sizes z1,z2,... (default: liquidity sizes)");
  quote->add_option("--coeffs", q.coeffs, "Coefficient JSON overriding the solve");
  quote->add_option("--save-coeffs", q.save_coeffs, "Write the coefficients used to this file");
  quote->add_option("--horizon", q.horizon, "Control horizon in days")->capture_default_str();
  quote->add_option("--grid", q.grid, "Grid points on [0, T]")->capture_default_str();
  quote->add_option("--out", q.out, "Output JSON (default: stdout)");

  std::string config;
  std::optional<std::uint64_t> seed;
  auto* simulate = app.add_subcommand("simulate", "Simulate one path with its event log");
  simulate->add_option("--config", config, "Run configuration JSON")->required();
  simulate->add_option("--seed", seed, "Seed (default: config)");
  simulate->add_option("--out", out, "Output directory")->required();

  std::string gammas;
  std::optional<int> paths;
  auto* front = app.add_subcommand("frontier", "Mean/std of excess PnL across a gamma grid");
  front->add_option("--config", config, "Run configuration JSON")->required();
  front->add_option("--gammas", gammas, "g1,g2,... (default: config)");
  front->add_option("--paths", paths, "Paths per gamma (default: config)");
  front->add_option("--seed", seed, "Seed (default: config)");
  front->add_option("--out", out, "Output CSV")->required();

  std::optional<int> starts;
  auto* replay = app.add_subcommand("replay", "Frontier on a historical series from random starts");
  replay->add_option("--data", data, "Price series (timestamp,price CSV)")->required();
  replay->add_option("--config", config, "Run configuration JSON")->required();
  replay->add_option("--gammas", gammas, "g1,g2,... (default: config)");
  replay->add_option("--starts", starts, "Number of start times (default: config n_paths)");
  replay->add_option("--seed", seed, "Seed (default: config)");
  replay->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(num, den, step, out);
    if (*calibrate) return cmd_calibrate(data, resample, detrend, out, fit_seed, restarts);
    if (*filter) return cmd_filter(data, params, filter_resample, out);
    if (*quote) return cmd_quote(q);
    if (*simulate) return cmd_simulate(config, seed, out);
    if (*front) return cmd_frontier(config, gammas, paths, seed, out);
    if (*replay) return cmd_replay(data, config, gammas, starts, seed, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
