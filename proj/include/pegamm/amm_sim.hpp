#pragma once

/**
 * @file amm_sim.hpp
 * @brief Event-driven AMM simulator and efficient-frontier experiments.
 *
 * Trades arrive per step by Bernoulli thinning: each (side, size atom) pair
 * trades at most once per step with probability Lambda(z, delta) w dt.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "pegamm/calibrate.hpp"
#include "pegamm/control.hpp"
#include "pegamm/intensity.hpp"
#include "pegamm/model.hpp"

namespace pegamm {

enum class StartMode {
  stationary,  ///< (S0, U0) drawn from the stationary law; filter starts at the posterior given S0
  peg,         ///< S0 = U0 = u_bar; filter starts at u_bar with the asymptotic variance
};

struct SimulatedPrices {
  NouParams params;  ///< may differ from the strategy's model (e.g. a frozen peg)
  StartMode start = StartMode::stationary;
};

struct HistoricalPrices {
  std::shared_ptr<const Sample> series;  ///< times in days
  std::size_t start_index = 0;
};

using PriceSource = std::variant<SimulatedPrices, HistoricalPrices>;

struct GreedyStrategy {
  std::shared_ptr<const ControlCoeffs> coeffs;
};
struct ConstantStrategy {
  double delta = 0.0;
};
struct NoQuoteStrategy {};

using Strategy = std::variant<GreedyStrategy, ConstantStrategy, NoQuoteStrategy>;

struct PathSetup {
  PriceSource prices;
  NouParams model;  ///< parameters used by the online filter
  LiquiditySpec liquidity;
  Strategy strategy = NoQuoteStrategy{};
  double dt = 10.0 / 86400.0;  ///< days
  double horizon = 1.0;        ///< days
  double q0_initial = 1e9;
  double q1_initial = 1e9;
  bool record_events = false;
  bool record_states = false;  ///< keep the post-step PoolState of every step
  bool check_bookkeeping = false;

  void validate() const;
};

struct PoolState {
  double t = 0.0;
  double x = 0.0;   ///< accumulated markups
  double y0 = 0.0;  ///< q0 - q0_initial
  double y1 = 0.0;  ///< q1 - q1_initial
  double q0 = 0.0;
  double q1 = 0.0;
  double s = 0.0;
  double u_hat = 0.0;
};

struct TradeEvent {
  double t = 0.0;
  Side side = Side::bid;
  double z = 0.0;
  double delta = 0.0;
  double rate = 0.0;  ///< executed exchange rate
  double s = 0.0;     ///< reference rate at execution
};

struct PathResult {
  double excess_pnl = 0.0;
  long trades_bid = 0;
  long trades_ask = 0;
  PoolState initial;
  PoolState terminal;
  std::vector<TradeEvent> events;
  std::vector<PoolState> states;  ///< initial state followed by one entry per step
};

struct FrontierPoint {
  double gamma = 0.0;
  double mean_excess_pnl = 0.0;
  double std_excess_pnl = 0.0;
  int n_paths = 0;
};

/// X + Y0 + Y1 S.
double excess_pnl(const PoolState& state);

/// Pool accounting for one executed trade.
void apply_trade(PoolState& state, const TradeEvent& event);

/// Replays an event log on an initial state (same arithmetic as run_path).
PoolState replay_events(PoolState state, std::span<const TradeEvent> events);

/// Largest step allowed by the thinning bound max lambda w dt <= 0.1.
double max_thinning_dt(const LiquiditySpec& liquidity);

PathResult run_path(const PathSetup& setup, std::uint64_t seed);

/// Excess PnL of n_paths independent paths; path i uses seed derived from
/// (seed xor i). Result order is by path index.
std::vector<double> run_ensemble(const PathSetup& setup, int n_paths, std::uint64_t seed);

FrontierPoint summarize(double gamma, std::span<const double> pnls);

struct FrontierSetup {
  PathSetup base;  ///< strategy is replaced by the greedy rule per gamma
  ControlConfig control;
};

/// Greedy strategy for one gamma: moments, then finite-horizon or ergodic
/// coefficients depending on control.ergodic.
GreedyStrategy make_greedy(const FrontierSetup& setup, double gamma);

std::vector<FrontierPoint> frontier(const FrontierSetup& setup, std::span<const double> gammas,
                                    int n_paths, std::uint64_t seed);

/// Uniform start indices such that [t_start, t_start + window] fits in the series.
std::vector<std::size_t> draw_start_indices(const Sample& series, double window, int n_starts,
                                            std::uint64_t seed);

std::vector<FrontierPoint> historical_replay(std::shared_ptr<const Sample> series,
                                             const FrontierSetup& setup,
                                             std::span<const double> gammas, int n_starts,
                                             std::uint64_t seed);

void write_frontier_csv(std::ostream& out, std::span<const FrontierPoint> points);
void write_events_csv(std::ostream& out, std::span<const TradeEvent> events);

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pegamm
