#include "pegamm/amm_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>
#include <type_traits>

#include "pegamm/errors.hpp"
#include "pegamm/filter.hpp"
#include "pegamm/rng.hpp"
#include "pegamm/util.hpp"

namespace pegamm {

namespace {

enum Stream : std::uint64_t { kPriceStream = 1, kTradeStream = 2, kStartStream = 3 };

long step_count(const PathSetup& setup) {
  return std::lround(setup.horizon / setup.dt);
}

// Piecewise-constant reader over a historical series, holding the last
// observation at or before the requested offset.
class HistoricalCursor {
 public:
  HistoricalCursor(const Sample& series, std::size_t start)
      : series_(series), index_(start), origin_(series.times[start]) {}

  double value_at(double offset) {
    const double t = origin_ + offset;
    while (index_ + 1 < series_.size() && series_.times[index_ + 1] <= t + 1e-12) ++index_;
    return series_.values[index_];
  }

 private:
  const Sample& series_;
  std::size_t index_;
  double origin_;
};

double quote(const Strategy& strategy, const LiquiditySpec& liquidity, const PoolState& state,
             double z, Side side) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, GreedyStrategy>) {
          const double tq = s.coeffs->ergodic ? 0.0 : std::min(state.t, s.coeffs->horizon());
          return greedy_markups(*s.coeffs, liquidity, tq, state.y1, state.s, state.u_hat, z, side);
        } else if constexpr (std::is_same_v<T, ConstantStrategy>) {
          return s.delta;
        } else {
          return std::numeric_limits<double>::infinity();
        }
      },
      strategy);
}

}  // namespace

void PathSetup::validate() const {
  model.validate();
  liquidity.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("simulation: dt must be > 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ValidationError("simulation: horizon must be > 0");
  }
  const double bound = max_thinning_dt(liquidity);
  if (dt > bound * (1.0 + 1e-12)) {
    throw ValidationError("simulation: dt=" + fmt_double(dt) +
                          " days violates the thinning bound max(lambda w) dt <= 0.1; need dt <= " +
                          fmt_double(bound) + " days");
  }
  if (const auto* sim = std::get_if<SimulatedPrices>(&prices)) {
    sim->params.validate_for_simulation();
  } else {
    const auto& hist = std::get<HistoricalPrices>(prices);
    if (!hist.series) throw ValidationError("simulation: missing historical series");
    hist.series->validate(2);
    if (hist.start_index >= hist.series->size() ||
        hist.series->times[hist.start_index] + horizon > hist.series->times.back() + 1e-12) {
      throw ValidationError("simulation: historical window does not fit in the series");
    }
  }
  if (const auto* g = std::get_if<GreedyStrategy>(&strategy)) {
    if (!g->coeffs) throw ValidationError("simulation: greedy strategy without coefficients");
    if (!g->coeffs->ergodic && horizon > g->coeffs->horizon() * (1.0 + 1e-12)) {
      throw ValidationError("simulation: horizon exceeds the control horizon");
    }
  }
}

double excess_pnl(const PoolState& s) { return s.x + s.y0 + s.y1 * s.s; }

void apply_trade(PoolState& state, const TradeEvent& e) {
  if (e.side == Side::bid) {
    state.q1 += e.z;
    state.q0 -= e.z * e.s;
    state.y1 += e.z;
    state.y0 -= e.z * e.s;
  } else {
    state.q1 -= e.z;
    state.q0 += e.z * e.s;
    state.y1 -= e.z;
    state.y0 += e.z * e.s;
  }
  state.x += e.z * e.delta;
}

PoolState replay_events(PoolState state, std::span<const TradeEvent> events) {
  for (const auto& e : events) apply_trade(state, e);
  return state;
}

double max_thinning_dt(const LiquiditySpec& liquidity) {
  double peak = 0.0;
  for (const auto& atom : liquidity.sizes.atoms) {
    peak = std::max({peak, liquidity.bid.lam * atom.w, liquidity.ask.lam * atom.w});
  }
  return 0.1 / peak;
}

PathResult run_path(const PathSetup& setup, std::uint64_t seed) {
  setup.validate();
  Rng price_rng(mix_seed(seed + kPriceStream));
  Rng trade_rng(mix_seed(seed + kTradeStream));
  const NouParams& model = setup.model;
  const long n_steps = step_count(setup);

  PoolState state;
  state.q0 = setup.q0_initial;
  state.q1 = setup.q1_initial;

  double u_latent = model.u_bar;
  std::optional<Transition> transition;
  std::optional<HistoricalCursor> cursor;
  const NouParams* price_params = nullptr;
  double u_hat0 = model.u_bar;
  std::optional<double> v0;

  if (const auto* sim = std::get_if<SimulatedPrices>(&setup.prices)) {
    price_params = &sim->params;
    transition = exact_transition(sim->params, setup.dt);
    if (sim->start == StartMode::stationary) {
      Rng start_rng(mix_seed(seed + kStartStream));
      const double c0 = stationary_cov(0.0, sim->params);
      const double cross = stationary_cross_cov(sim->params);
      const double z1 = start_rng.normal();
      const double z2 = start_rng.normal();
      if (c0 > 0.0) {
        const double x = std::sqrt(c0) * z1;
        const double cond_var = std::max(0.0, stationary_latent_var(sim->params) - cross * cross / c0);
        state.s = sim->params.u_bar + x;
        u_latent = sim->params.u_bar + cross / c0 * x + std::sqrt(cond_var) * z2;
      } else {
        state.s = sim->params.u_bar;
        u_latent = sim->params.u_bar + std::sqrt(stationary_latent_var(sim->params)) * z2;
      }
      // filter prior: posterior of U given S0 under the strategy's model
      const double mc0 = stationary_cov(0.0, model);
      const double mcross = stationary_cross_cov(model);
      u_hat0 = model.u_bar + mcross / mc0 * (state.s - model.u_bar);
      v0 = std::max(0.0, stationary_latent_var(model) - mcross * mcross / mc0);
    } else {
      state.s = sim->params.u_bar;
      u_latent = sim->params.u_bar;
    }
  } else {
    const auto& hist = std::get<HistoricalPrices>(setup.prices);
    cursor.emplace(*hist.series, hist.start_index);
    state.s = cursor->value_at(0.0);
  }

  NouFilter filter(model, state.s, u_hat0, v0, 0.0);
  state.u_hat = filter.state().u_hat;

  PathResult result;
  result.initial = state;
  if (setup.record_states) {
    result.states.reserve(static_cast<std::size_t>(n_steps) + 1);
    result.states.push_back(state);
  }
  const auto& atoms = setup.liquidity.sizes.atoms;
  std::vector<TradeEvent> pending;
  for (long k = 0; k < n_steps; ++k) {
    state.t = setup.dt * static_cast<double>(k);
    pending.clear();
    for (Side side : {Side::bid, Side::ask}) {
      const SideIntensity& si = setup.liquidity.side(side);
      for (const auto& atom : atoms) {
        const double delta = quote(setup.strategy, setup.liquidity, state, atom.z, side);
        const double prob = intensity(si, atom.z, delta) * atom.w * setup.dt;
        const double u = trade_rng.uniform();
        if (u < prob) {
          const double rate = side == Side::bid ? state.s - delta : state.s + delta;
          pending.push_back({state.t, side, atom.z, delta, rate, state.s});
        }
      }
    }
    for (const auto& e : pending) {
      apply_trade(state, e);
      (e.side == Side::bid ? result.trades_bid : result.trades_ask) += 1;
      if (setup.record_events) result.events.push_back(e);
    }

    const double t_next = setup.dt * static_cast<double>(k + 1);
    if (transition) {
      const double z1 = price_rng.normal();
      const double z2 = price_rng.normal();
      const PathState next =
          step_exact(*transition, *price_params, {state.t, state.s, u_latent}, setup.dt, z1, z2);
      state.s = next.s;
      u_latent = next.u;
    } else {
      state.s = cursor->value_at(t_next);
    }
    filter.update(t_next, state.s);
    state.u_hat = filter.state().u_hat;
    state.t = t_next;
    if (setup.record_states) result.states.push_back(state);

    if (setup.check_bookkeeping) {
      const double direct = (state.q0 - setup.q0_initial) + state.s * (state.q1 - setup.q1_initial) + state.x;
      const double pnl = excess_pnl(state);
      // Reserves are large, so q - q_initial carries the rounding of every
      // trade applied to them; allow that much on top of a relative bound.
      const double trades = static_cast<double>(result.trades_bid + result.trades_ask);
      const double reserve_ulps = 4.0 * std::numeric_limits<double>::epsilon() *
                                  (std::abs(state.q0) + std::abs(state.s * state.q1)) * (1.0 + trades);
      if (std::abs(direct - pnl) > 1e-9 * std::max(1.0, std::abs(pnl)) + reserve_ulps) {
        throw NumericalError("bookkeeping mismatch at t=" + fmt_double(state.t));
      }
    }
  }
  result.terminal = state;
  result.excess_pnl = excess_pnl(state);
  if (!std::isfinite(result.excess_pnl)) throw NumericalError("run_path: non-finite excess PnL");
  return result;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> run_ensemble(const PathSetup& setup, int n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw ValidationError("run_ensemble: n_paths must be >= 1");
  setup.validate();
  std::vector<double> pnls(static_cast<std::size_t>(n_paths));
  parallel_for(pnls.size(), [&](std::size_t i) {
    try {
      pnls[i] = run_path(setup, derive_seed(seed, i)).excess_pnl;
    } catch (const std::exception& e) {
      throw NumericalError("path " + std::to_string(i) + " failed: " + e.what());
    }
  });
  return pnls;
}

FrontierPoint summarize(double gamma, std::span<const double> pnls) {
  return {gamma, mean_of(pnls), stddev_of(pnls), static_cast<int>(pnls.size())};
}

GreedyStrategy make_greedy(const FrontierSetup& setup, double gamma) {
  ControlConfig cfg = setup.control;
  cfg.gamma = gamma;
  const FilteredNouParams fp = filtered_params(setup.base.model);
  const DeltaMoments deltas = delta_moments(setup.base.liquidity, gamma);
  auto coeffs = std::make_shared<ControlCoeffs>(cfg.ergodic ? ergodic_control(fp, cfg, deltas)
                                                            : solve_control(fp, cfg, deltas));
  return GreedyStrategy{std::move(coeffs)};
}

std::vector<FrontierPoint> frontier(const FrontierSetup& setup, std::span<const double> gammas,
                                    int n_paths, std::uint64_t seed) {
  if (n_paths < 2) throw ValidationError("frontier: n_paths must be >= 2");
  std::vector<FrontierPoint> out;
  for (double gamma : gammas) {
    PathSetup ps = setup.base;
    ps.strategy = make_greedy(setup, gamma);
    ps.record_events = false;
    try {
      const auto pnls = run_ensemble(ps, n_paths, seed);
      out.push_back(summarize(gamma, pnls));
    } catch (const std::exception& e) {
      throw NumericalError("frontier: gamma=" + fmt_double(gamma) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::size_t> draw_start_indices(const Sample& series, double window, int n_starts,
                                            std::uint64_t seed) {
  series.validate(2);
  if (n_starts < 1) throw ValidationError("replay: n_starts must be >= 1");
  if (series.times.back() - series.times.front() < window) {
    throw ValidationError("replay: series shorter than the replay window");
  }
  const double latest = series.times.back() - window;
  const auto end = static_cast<std::size_t>(
      std::upper_bound(series.times.begin(), series.times.end(), latest + 1e-12) -
      series.times.begin());
  Rng rng(mix_seed(seed + kStartStream));
  std::vector<std::size_t> starts(static_cast<std::size_t>(n_starts));
  for (auto& s : starts) s = static_cast<std::size_t>(rng.below(end));
  return starts;
}

std::vector<FrontierPoint> historical_replay(std::shared_ptr<const Sample> series,
                                             const FrontierSetup& setup,
                                             std::span<const double> gammas, int n_starts,
                                             std::uint64_t seed) {
  if (!series) throw ValidationError("replay: missing series");
  if (n_starts < 2) throw ValidationError("replay: n_starts must be >= 2");
  const auto starts = draw_start_indices(*series, setup.base.horizon, n_starts, seed);
  std::vector<FrontierPoint> out;
  for (double gamma : gammas) {
    PathSetup ps = setup.base;
    ps.strategy = make_greedy(setup, gamma);
    ps.record_events = false;
    std::vector<double> pnls(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
      PathSetup local = ps;
      local.prices = HistoricalPrices{series, starts[i]};
      try {
        pnls[i] = run_path(local, derive_seed(seed, i)).excess_pnl;
      } catch (const std::exception& e) {
        throw NumericalError("replay: gamma=" + fmt_double(gamma) + " path " + std::to_string(i) +
                             " failed: " + e.what());
      }
    });
    out.push_back(summarize(gamma, pnls));
  }
  return out;
}

void write_frontier_csv(std::ostream& out, std::span<const FrontierPoint> points) {
  out << "gamma,mean_excess_pnl,std_excess_pnl,n_paths\n";
  for (const auto& p : points) {
    out << fmt_double(p.gamma) << ',' << fmt_double(p.mean_excess_pnl) << ','
        << fmt_double(p.std_excess_pnl) << ',' << p.n_paths << '\n';
  }
}

void write_events_csv(std::ostream& out, std::span<const TradeEvent> events) {
  out << "t,side,z,delta,rate\n";
  for (const auto& e : events) {
    out << fmt_double(e.t) << ",\"" << side_label(e.side) << "\"," << fmt_double(e.z) << ','
        << fmt_double(e.delta) << ',' << fmt_double(e.rate) << '\n';
  }
}

}  // namespace pegamm
