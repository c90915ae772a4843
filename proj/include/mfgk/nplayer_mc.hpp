#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/flow.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/model.hpp"
#include "mfgk/nplayer_exact.hpp"
#include "mfgk/parallel.hpp"
#include "mfgk/rng.hpp"

namespace mfgk {

/// Mean and variance accumulator (Welford), mergeable (Chan et al.).
class RunningStats {
 public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double delta = o.mean_ - mean_;
    mean_ += delta * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const noexcept { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
  /// 95% normal half-width 1.96 s / sqrt(n).
  double ci_half_width() const noexcept { return 1.96 * std_error(); }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// One mark of a player's Poisson clock. Targets equal to the current state
/// are rejected marks.
struct PoissonEvent {
  double time = 0.0;
  std::size_t player = 0;
  std::size_t target = 0;
  double height = 0.0;  // uniform on [0, rate bound)
  bool x_jump = false;
  bool y_jump = false;
};

using EventSink = std::function<void(std::size_t replication, const PoissonEvent&)>;

struct McOptions {
  std::size_t threads = 1;
  /// Player i draws from stream stream_of[i]; empty means the identity.
  std::vector<std::uint32_t> stream_of;
  /// Receives every event in order; forces sequential replications.
  EventSink event_sink;
  /// Rate ceiling used for thinning; defaults to the model's rate bound.
  std::optional<double> rate_bound;
};

struct CheckpointStats {
  double t = 0.0;
  RunningStats mu_error;  // |mu^N(t) - m(t)|
  RunningStats x_error;   // |X_1(t) - Y_1(t)|
  RunningStats mismatch;  // 1{X_1(t) != Y_1(t)}
  std::vector<RunningStats> x1_state;  // 1{X_1(t) = z}
  std::vector<RunningStats> y1_state;  // 1{Y_1(t) = z}
};

struct CoupledPathStats {
  std::size_t N = 0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::vector<CheckpointStats> checkpoints;
  RunningStats events_per_player_time;  // per replication: events / (N T)
  RunningStats player1_cost;
  std::size_t mismatch_paths = 0;  // replications where X_1 and Y_1 ever differ
};

namespace detail {

inline constexpr std::size_t kReplicationChunk = 64;

struct McContext {
  const ModelSpec& spec;
  const FeedbackPolicy& policy;
  const MeasureFlow* m;  // null: no mean-field copy
  std::size_t N;
  std::uint64_t seed;
  std::span<const double> checkpoints;
  const McOptions& opt;
  double bound;
};

inline std::size_t draw_initial(PhiloxStream& rng, std::span<const double> m0) {
  const double u = rng.next_uniform();
  double acc = 0.0;
  for (std::size_t z = 0; z + 1 < m0.size(); ++z) {
    acc += m0[z];
    if (u < acc) return z;
  }
  // Last state with positive mass takes the rounding remainder.
  std::size_t z = m0.size() - 1;
  while (z > 0 && m0[z] <= 0.0) --z;
  return z;
}

inline double checked_rate(const McContext& c, double t, std::size_t x, std::size_t y, const Action& a,
                           std::span<const double> p) {
  const double r = c.spec.rate(t, x, y, a, p);
  if (r > c.bound + 1e-12)
    throw Error(Errc::RateExceedsBound, "rate " + std::to_string(r) + " above thinning bound " + std::to_string(c.bound));
  if (r < -1e-12) throw Error(Errc::NegativeRate, "negative rate during simulation");
  return r;
}

/// Player 1's running cost integrated over [a, b] with X_1 = x and mu^N fixed;
/// the policy is piecewise constant on grid intervals.
inline double integrate_running(const McContext& c, double a, double b, std::size_t x, std::span<const double> mu) {
  const TimeGrid& g = c.policy.grid;
  double acc = 0.0;
  double t = a;
  for (std::size_t k = g.interval(a); t < b; ++k) {
    const double end = k + 1 >= g.steps() ? b : std::min(b, g.time(k + 1));
    if (end > t) acc += c.spec.running_cost(t, x, c.policy.at(k, x), mu) * (end - t);
    t = end;
  }
  return acc;
}

/// Simulates replications [begin, end) into `out` (checkpoint layout already set).
inline void simulate_chunk(const McContext& c, std::size_t begin, std::size_t end, CoupledPathStats& out) {
  const ModelSpec& spec = c.spec;
  const std::size_t d = spec.d;
  const std::size_t N = c.N;
  const double T = spec.T;
  const double clock_rate = static_cast<double>(d) * c.bound;

  std::vector<PhiloxStream> rng;
  std::vector<std::size_t> X(N), Y(N);
  std::vector<int> count(d);
  std::vector<double> mu(d), mt(d);

  using Entry = std::pair<double, std::size_t>;  // (time, player); ties by player
  for (std::size_t rep = begin; rep < end; ++rep) {
    rng.clear();
    for (std::size_t i = 0; i < N; ++i) {
      const std::uint32_t stream = c.opt.stream_of.empty() ? static_cast<std::uint32_t>(i) : c.opt.stream_of[i];
      rng.emplace_back(c.seed, static_cast<std::uint32_t>(rep), stream);
    }
    std::fill(count.begin(), count.end(), 0);
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> clock;
    for (std::size_t i = 0; i < N; ++i) {
      X[i] = Y[i] = draw_initial(rng[i], spec.m0);
      ++count[X[i]];
      if (clock_rate > 0.0) clock.emplace(rng[i].next_exponential(clock_rate), i);
    }
    auto refresh_mu = [&] {
      for (std::size_t z = 0; z < d; ++z) mu[z] = static_cast<double>(count[z]) / static_cast<double>(N);
    };
    refresh_mu();

    std::size_t next_cp = 0;
    std::size_t events = 0;
    double cost = 0.0;
    double last_t = 0.0;
    bool ever_mismatch = false;
    auto record_until = [&](double t_event) {
      while (next_cp < c.checkpoints.size() && c.checkpoints[next_cp] < t_event) {
        auto& cp = out.checkpoints[next_cp];
        const double tc = c.checkpoints[next_cp];
        if (c.m) {
          interpolate_into(*c.m, tc, mt);
          cp.mu_error.add(euclidean_distance(mu, mt));
        }
        cp.x_error.add(std::abs(static_cast<double>(X[0]) - static_cast<double>(Y[0])));
        cp.mismatch.add(X[0] != Y[0] ? 1.0 : 0.0);
        for (std::size_t z = 0; z < d; ++z) {
          cp.x1_state[z].add(X[0] == z ? 1.0 : 0.0);
          cp.y1_state[z].add(Y[0] == z ? 1.0 : 0.0);
        }
        ++next_cp;
      }
    };

    while (!clock.empty() && clock.top().first <= T) {
      const auto [t, i] = clock.top();
      clock.pop();
      record_until(t);
      cost += integrate_running(c, last_t, t, X[0], mu);
      last_t = t;

      PoissonEvent ev;
      ev.time = t;
      ev.player = i;
      ev.target = rng[i].next_index(d);
      ev.height = rng[i].next_uniform() * c.bound;
      const std::size_t k = c.policy.grid.interval(t);
      if (ev.target != X[i]) {
        // mu still holds the pre-event measure mu^N(t-).
        const double r = checked_rate(c, t, X[i], ev.target, c.policy.at(k, X[i]), mu);
        ev.x_jump = ev.height < r;
      }
      if (c.m && ev.target != Y[i]) {
        interpolate_into(*c.m, t, mt);
        const double r = checked_rate(c, t, Y[i], ev.target, c.policy.at(k, Y[i]), mt);
        ev.y_jump = ev.height < r;
      }
      if (ev.x_jump) {
        --count[X[i]];
        ++count[ev.target];
        X[i] = ev.target;
        refresh_mu();
      }
      if (ev.y_jump) Y[i] = ev.target;
      if (c.m && X[0] != Y[0]) ever_mismatch = true;
      if (c.opt.event_sink) c.opt.event_sink(rep, ev);
      ++events;
      clock.emplace(t + rng[i].next_exponential(clock_rate), i);
    }
    record_until(INFINITY);
    cost += integrate_running(c, last_t, T, X[0], mu) + spec.terminal_cost(X[0], mu);
    out.player1_cost.add(cost);
    out.events_per_player_time.add(static_cast<double>(events) / (static_cast<double>(N) * T));
    if (ever_mismatch) ++out.mismatch_paths;
  }
}

inline CoupledPathStats empty_stats(std::size_t d, std::size_t N, std::size_t reps, std::uint64_t seed,
                                    std::span<const double> checkpoints) {
  CoupledPathStats s;
  s.N = N;
  s.replications = reps;
  s.seed = seed;
  for (double t : checkpoints) {
    CheckpointStats cp;
    cp.t = t;
    cp.x1_state.resize(d);
    cp.y1_state.resize(d);
    s.checkpoints.push_back(std::move(cp));
  }
  return s;
}

inline void merge_into(CoupledPathStats& acc, const CoupledPathStats& part) {
  for (std::size_t i = 0; i < acc.checkpoints.size(); ++i) {
    auto& a = acc.checkpoints[i];
    const auto& b = part.checkpoints[i];
    a.mu_error.merge(b.mu_error);
    a.x_error.merge(b.x_error);
    a.mismatch.merge(b.mismatch);
    for (std::size_t z = 0; z < a.x1_state.size(); ++z) {
      a.x1_state[z].merge(b.x1_state[z]);
      a.y1_state[z].merge(b.y1_state[z]);
    }
  }
  acc.events_per_player_time.merge(part.events_per_player_time);
  acc.player1_cost.merge(part.player1_cost);
  acc.mismatch_paths += part.mismatch_paths;
}

inline CoupledPathStats run_replications(const McContext& c, std::size_t reps) {
  const std::size_t d = c.spec.d;
  CoupledPathStats total = empty_stats(d, c.N, reps, c.seed, c.checkpoints);
  const std::size_t chunks = (reps + kReplicationChunk - 1) / kReplicationChunk;
  std::vector<CoupledPathStats> parts(chunks, empty_stats(d, c.N, 0, c.seed, c.checkpoints));
  auto run = [&](std::size_t b, std::size_t e) {
    for (std::size_t ch = b; ch < e; ++ch)
      simulate_chunk(c, ch * kReplicationChunk, std::min(reps, (ch + 1) * kReplicationChunk), parts[ch]);
  };
  if (c.opt.event_sink || c.opt.threads <= 1) {
    run(0, chunks);
  } else {
    ThreadPool pool(c.opt.threads);
    pool.parallel_for(chunks, run);
  }
  // Fixed chunk boundaries and merge order: independent of the thread count.
  for (const auto& p : parts) merge_into(total, p);
  return total;
}

inline McContext make_context(const ModelSpec& spec, const FeedbackPolicy& policy, const MeasureFlow* m, std::size_t N,
                              std::uint64_t seed, std::span<const double> checkpoints, const McOptions& opt) {
  require_same_grid(spec, policy.grid);
  if (m) require_same_grid(spec, m->grid);
  if (N < 1) throw Error(Errc::InvalidModel, "simulation needs at least one player");
  if (!opt.stream_of.empty() && opt.stream_of.size() != N)
    throw Error(Errc::InvalidConfig, "stream_of must assign one stream per player");
  for (std::size_t i = 1; i < checkpoints.size(); ++i)
    if (!(checkpoints[i] > checkpoints[i - 1])) throw Error(Errc::InvalidConfig, "checkpoints must increase");
  for (double t : checkpoints)
    if (t < 0.0 || t > spec.T) throw Error(Errc::OutOfRange, "checkpoint outside [0, T]");
  const double bound = opt.rate_bound.value_or(spec.rate_bound());
  return McContext{spec, policy, m, N, seed, checkpoints, opt, bound};
}

}  // namespace detail

/// Event-driven simulation of the N-player system X and its mean-field copy
/// Y (each player reacting to m instead of mu^N), both driven by the same
/// Poisson marks. Checkpoint statistics are taken just before any event at
/// the checkpoint time, which has probability zero.
inline CoupledPathStats simulate_coupled(const ModelSpec& spec, const FeedbackPolicy& policy, const MeasureFlow& m,
                                         std::size_t N, std::size_t replications, std::uint64_t seed,
                                         std::span<const double> checkpoints, const McOptions& opt = {}) {
  const auto c = detail::make_context(spec, policy, &m, N, seed, checkpoints, opt);
  return detail::run_replications(c, replications);
}

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci = 0.0;  // 1.96 std_error
  std::size_t replications = 0;
};

/// Monte Carlo estimate of player 1's expected cost when all N players use
/// the feedback; running cost integrated exactly along each path.
inline CostEstimate mc_cost_estimate(const ModelSpec& spec, const FeedbackPolicy& policy, std::size_t N,
                                     std::size_t replications, std::uint64_t seed, const McOptions& opt = {}) {
  const auto c = detail::make_context(spec, policy, nullptr, N, seed, {}, opt);
  const auto s = detail::run_replications(c, replications);
  return CostEstimate{s.player1_cost.mean(), s.player1_cost.std_error(), s.player1_cost.ci_half_width(),
                      replications};
}

/// Evenly spaced checkpoints t_j = j T / n, j = 1..n.
inline std::vector<double> uniform_checkpoints(double T, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = j + 1 == n ? T : T * static_cast<double>(j + 1) / static_cast<double>(n);
  return out;
}

struct ErrorRateRow {
  std::size_t N = 0;
  std::size_t replications = 0;
  double t_max = 0.0;         // checkpoint attaining the max
  double max_mu_error = 0.0;  // max over checkpoints of mean |mu^N - m|
  double ci = 0.0;            // CI half-width at that checkpoint
};

struct ErrorRateFit {
  std::vector<ErrorRateRow> rows;
  std::optional<double> slope;  // log max_mu_error vs log N
};

inline ErrorRateFit empirical_error_rate_fit(std::span<const CoupledPathStats> runs) {
  std::vector<std::size_t> Ns;
  for (const auto& r : runs)
    if (std::find(Ns.begin(), Ns.end(), r.N) == Ns.end()) Ns.push_back(r.N);
  if (Ns.size() < 3) throw Error(Errc::InsufficientData, "rate fit needs at least three distinct N");
  ErrorRateFit fit;
  std::vector<double> xs, ys;
  for (const auto& r : runs) {
    if (r.checkpoints.empty()) throw Error(Errc::InsufficientData, "run without checkpoints");
    ErrorRateRow row{r.N, r.replications, 0.0, -1.0, 0.0};
    for (const auto& cp : r.checkpoints)
      if (cp.mu_error.mean() > row.max_mu_error) {
        row.max_mu_error = cp.mu_error.mean();
        row.ci = cp.mu_error.ci_half_width();
        row.t_max = cp.t;
      }
    fit.rows.push_back(row);
    xs.push_back(static_cast<double>(r.N));
    ys.push_back(row.max_mu_error);
  }
  fit.slope = loglog_slope(xs, ys);
  return fit;
}

}  // namespace mfgk
