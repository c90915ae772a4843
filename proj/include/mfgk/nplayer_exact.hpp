#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mfgk/count_states.hpp"
#include "mfgk/error.hpp"
#include "mfgk/hamiltonian.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/model.hpp"
#include "mfgk/parallel.hpp"
#include "mfgk/rk4.hpp"

namespace mfgk {

struct ExactOptions {
  std::size_t state_cap = CountStateIndex::kDefaultCap;
  std::size_t threads = 1;
  bool keep_policy = false;  // store the deviation policy at every node
};

/// The N-player chain seen from player 1: joint states (x1, n) with n the
/// occupancy of the other N - 1 players, all of whom follow the decentralized
/// feedback gamma(t, own state). Player 1's action is supplied by the caller.
class JointChain {
 public:
  JointChain(const ModelSpec& spec, const FeedbackPolicy& policy, std::size_t N, std::size_t state_cap)
      : spec_(spec), policy_(policy), N_(N), index_(enumerate_count_states(spec.d, N, state_cap)) {
    detail::require_same_grid(spec, policy.grid);
    const std::size_t d = spec.d;
    mu_.resize(index_.joint_size() * d);
    for (std::size_t r = 0; r < index_.size(); ++r) {
      const auto n = index_.counts(r);
      for (std::size_t x1 = 0; x1 < d; ++x1) {
        double* mu = mu_.data() + index_.joint(r, x1) * d;
        for (std::size_t z = 0; z < d; ++z)
          mu[z] = (static_cast<double>(n[z]) + (z == x1 ? 1.0 : 0.0)) / static_cast<double>(N);
      }
    }
  }

  const CountStateIndex& index() const noexcept { return index_; }
  std::size_t size() const noexcept { return index_.joint_size(); }
  std::size_t players() const noexcept { return N_; }
  const TimeGrid& grid() const noexcept { return policy_.grid; }

  /// Empirical measure (e_{x1} + n) / N of joint state j.
  std::span<const double> mu(std::size_t j) const noexcept { return {mu_.data() + j * spec_.d, spec_.d}; }

  /// Drift of V at joint state j from the other players' jumps during
  /// interval k: sum_{z,y} n_z lambda(z, y, gamma(z), mu) (V(x1, n - e_z + e_y) - V(x1, n)).
  double others_drift(double t, std::size_t k, std::size_t j, std::span<const double> V) const noexcept {
    const std::size_t d = spec_.d;
    const std::size_t r = j / d;
    const std::size_t x1 = j % d;
    const auto n = index_.counts(r);
    const auto p = mu(j);
    double acc = 0.0;
    for (std::size_t z = 0; z < d; ++z) {
      if (n[z] == 0) continue;
      const Action& a = policy_.at(k, z);
      for (std::size_t y = 0; y < d; ++y) {
        if (y == z) continue;
        const auto target = static_cast<std::size_t>(index_.move(r, z, y));
        acc += static_cast<double>(n[z]) * spec_.rate(t, z, y, a, p) * (V[target * d + x1] - V[j]);
      }
    }
    return acc;
  }

  /// Player 1 terms at joint state j under action a: own generator plus
  /// running cost.
  double player_terms(double t, std::size_t j, const Action& a, std::span<const double> V) const noexcept {
    const std::size_t d = spec_.d;
    const std::size_t r = j / d;
    const std::size_t x1 = j % d;
    return pre_hamiltonian(spec_, t, x1, a, mu(j), V.subspan(r * d, d));
  }

  /// Best player-1 action at joint state j given V.
  HamiltonianValue best_action(double t, std::size_t j, std::span<const double> V) const {
    const std::size_t d = spec_.d;
    const std::size_t r = j / d;
    return minimize_hamiltonian(spec_, t, j % d, mu(j), V.subspan(r * d, d));
  }

  const Action& gamma(std::size_t k, std::size_t x) const noexcept { return policy_.at(k, x); }

  std::vector<double> terminal_values() const {
    std::vector<double> v(size());
    for (std::size_t j = 0; j < size(); ++j) v[j] = spec_.terminal_cost(j % spec_.d, mu(j));
    return v;
  }

  /// Probability of joint state j at time 0: x1 ~ m0 and n ~ Multinomial(N - 1, m0).
  std::vector<double> initial_weights() const {
    const std::size_t d = spec_.d;
    std::vector<double> w(size(), 0.0);
    const double log_norm = std::lgamma(static_cast<double>(index_.total()) + 1.0);
    for (std::size_t r = 0; r < index_.size(); ++r) {
      const auto n = index_.counts(r);
      double logp = log_norm;
      bool possible = true;
      for (std::size_t z = 0; z < d; ++z) {
        if (n[z] == 0) continue;
        if (spec_.m0[z] <= 0.0) {
          possible = false;
          break;
        }
        logp += static_cast<double>(n[z]) * std::log(spec_.m0[z]) - std::lgamma(static_cast<double>(n[z]) + 1.0);
      }
      if (!possible) continue;
      const double pn = std::exp(logp);
      for (std::size_t x1 = 0; x1 < d; ++x1) w[index_.joint(r, x1)] = spec_.m0[x1] * pn;
    }
    return w;
  }

  /// Sparse generator row of joint state j on interval k with player 1
  /// playing a: (target, rate) pairs, diagonal included.
  std::vector<std::pair<std::size_t, double>> generator_row(double t, std::size_t k, std::size_t j,
                                                            const Action& a) const {
    const std::size_t d = spec_.d;
    const std::size_t r = j / d;
    const std::size_t x1 = j % d;
    const auto n = index_.counts(r);
    std::vector<std::pair<std::size_t, double>> row;
    double out = 0.0;
    for (std::size_t y = 0; y < d; ++y) {
      if (y == x1) continue;
      const double rate = spec_.rate(t, x1, y, a, mu(j));
      row.emplace_back(index_.joint(r, y), rate);
      out += rate;
    }
    for (std::size_t z = 0; z < d; ++z) {
      if (n[z] == 0) continue;
      for (std::size_t y = 0; y < d; ++y) {
        if (y == z) continue;
        const double rate = static_cast<double>(n[z]) * spec_.rate(t, z, y, policy_.at(k, z), mu(j));
        row.emplace_back(index_.joint(static_cast<std::size_t>(index_.move(r, z, y)), x1), rate);
        out += rate;
      }
    }
    row.emplace_back(j, -out);
    return row;
  }

 private:
  const ModelSpec& spec_;
  const FeedbackPolicy& policy_;
  std::size_t N_;
  CountStateIndex index_;
  std::vector<double> mu_;
};

namespace detail {

inline double weighted_sum(const std::vector<double>& w, const std::vector<double>& v) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * v[j];
  return acc;
}

inline void check_finite_joint(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(Errc::NonFiniteValue, "joint-chain integration produced a non-finite value");
}

/// Joint states below this size run single-threaded.
inline constexpr std::size_t kParallelThreshold = 2048;

template <class PerState>
void for_each_state(ThreadPool& pool, std::size_t n, PerState&& fn) {
  if (n < kParallelThreshold || pool.size() == 1) {
    for (std::size_t j = 0; j < n; ++j) fn(j);
    return;
  }
  pool.parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) fn(j);
  });
}

/// Backward evaluation of a node-held player-1 action field against the
/// symmetric others: J_k from J_{k+1}.
inline void evaluation_step(const JointChain& chain, ThreadPool& pool, Rk4& rk4, std::size_t k,
                            const std::vector<Action>& own, std::vector<double>& J) {
  auto rhs = [&](double t, std::span<const double> y, std::span<double> dydt) {
    for_each_state(pool, chain.size(), [&](std::size_t j) {
      dydt[j] = -(chain.player_terms(t, j, own[j], y) + chain.others_drift(t, k, j, y));
    });
  };
  rk4.step(rhs, chain.grid().time(k + 1), -chain.grid().dt(), J);
  check_finite_joint(J);
}

}  // namespace detail

/// Expected cost J^N_1 of player 1 when all N players use gamma(t, own state).
inline double cost_under_symmetric_feedback(const ModelSpec& spec, const FeedbackPolicy& policy, std::size_t N,
                                            const ExactOptions& opt = {}) {
  const JointChain chain(spec, policy, N, opt.state_cap);
  ThreadPool pool(opt.threads);
  Rk4 rk4(chain.size());
  std::vector<double> J = chain.terminal_values();
  std::vector<Action> own(chain.size());
  for (std::size_t k = chain.grid().steps(); k-- > 0;) {
    for (std::size_t j = 0; j < chain.size(); ++j) own[j] = chain.gamma(k, j % spec.d);
    detail::evaluation_step(chain, pool, rk4, k, own, J);
  }
  return detail::weighted_sum(chain.initial_weights(), J);
}

/// Player-1 deviation held per node and joint state.
struct DeviationPolicy {
  TimeGrid grid;
  std::size_t joint_size = 0;
  std::vector<Action> actions;  // node * joint_size + joint state

  const Action& at(std::size_t k, std::size_t j) const { return actions[k * joint_size + j]; }
};

struct BestResponse {
  double value = 0.0;  // optimal expected cost from the joint HJB
  double cost = 0.0;   // expected cost of the node-held deviation policy
  std::optional<DeviationPolicy> policy;
};

/// Best response of player 1 against N - 1 players using gamma: the HJB on
/// the joint space with player 1 minimizing and the others following gamma.
/// The node minimizers form the deviation policy; its cost is evaluated with
/// the same node-held convention as the symmetric profile, so the two costs
/// are directly comparable.
inline BestResponse best_response(const ModelSpec& spec, const FeedbackPolicy& policy, std::size_t N,
                                  const ExactOptions& opt = {}) {
  const JointChain chain(spec, policy, N, opt.state_cap);
  ThreadPool pool(opt.threads);
  const std::size_t J = chain.size();
  Rk4 rk4_value(J);
  Rk4 rk4_cost(J);
  std::vector<double> V = chain.terminal_values();
  std::vector<double> C = V;
  std::vector<Action> dev(J);

  BestResponse out;
  if (opt.keep_policy) out.policy = DeviationPolicy{chain.grid(), J, std::vector<Action>(chain.grid().nodes() * J)};
  auto node_minimizers = [&](std::size_t k) {
    const double t = chain.grid().time(k);
    detail::for_each_state(pool, J, [&](std::size_t j) { dev[j] = chain.best_action(t, j, V).minimizer; });
    if (out.policy) std::copy(dev.begin(), dev.end(), out.policy->actions.begin() + static_cast<std::ptrdiff_t>(k * J));
  };

  node_minimizers(chain.grid().steps());
  for (std::size_t k = chain.grid().steps(); k-- > 0;) {
    rk4_value.step(
        [&](double t, std::span<const double> y, std::span<double> dydt) {
          detail::for_each_state(pool, J, [&](std::size_t j) {
            dydt[j] = -(chain.best_action(t, j, y).value + chain.others_drift(t, k, j, y));
          });
        },
        chain.grid().time(k + 1), -chain.grid().dt(), V);
    detail::check_finite_joint(V);
    node_minimizers(k);
    detail::evaluation_step(chain, pool, rk4_cost, k, dev, C);
  }
  const auto w = chain.initial_weights();
  out.value = detail::weighted_sum(w, V);
  out.cost = detail::weighted_sum(w, C);
  return out;
}

struct NashGapReport {
  std::size_t N = 0;
  double cost_symmetric = 0.0;
  double cost_best_response = 0.0;
  double value_best_response = 0.0;
  double raw_epsilon = 0.0;
  double epsilon = 0.0;  // raw_epsilon with roundoff-level negatives mapped to 0
  std::optional<double> slope_fit;
};

inline constexpr double kNashGapFloor = -1e-8;

inline NashGapReport nash_gap(const ModelSpec& spec, const FeedbackPolicy& policy, std::size_t N,
                              const ExactOptions& opt = {}) {
  NashGapReport r;
  r.N = N;
  r.cost_symmetric = cost_under_symmetric_feedback(spec, policy, N, opt);
  const BestResponse br = best_response(spec, policy, N, opt);
  r.cost_best_response = br.cost;
  r.value_best_response = br.value;
  r.raw_epsilon = r.cost_symmetric - r.cost_best_response;
  r.epsilon = (r.raw_epsilon < 0.0 && r.raw_epsilon >= kNashGapFloor) ? 0.0 : r.raw_epsilon;
  return r;
}

/// Least-squares slope of log y against log x over points with y > 0;
/// nullopt with fewer than two such points.
inline std::optional<double> loglog_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i] > 0.0 && x[i] > 0.0) pts.emplace_back(std::log(x[i]), std::log(y[i]));
  if (pts.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (const auto& [a, b] : pts) {
    mx += a;
    my += b;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [a, b] : pts) {
    sxx += (a - mx) * (a - mx);
    sxy += (a - mx) * (b - my);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

struct NashGapTable {
  std::vector<NashGapReport> rows;
  std::optional<double> slope;  // of log epsilon vs log N
};

inline NashGapTable nash_gap_table(const ModelSpec& spec, const FeedbackPolicy& policy,
                                   const std::vector<std::size_t>& Ns, const ExactOptions& opt = {}) {
  NashGapTable t;
  std::vector<double> xs, ys;
  for (std::size_t N : Ns) {
    t.rows.push_back(nash_gap(spec, policy, N, opt));
    xs.push_back(static_cast<double>(N));
    ys.push_back(t.rows.back().epsilon);
  }
  if (std::all_of(ys.begin(), ys.end(), [](double e) { return e > 0.0; })) t.slope = loglog_slope(xs, ys);
  for (auto& row : t.rows) row.slope_fit = t.slope;
  return t;
}

}  // namespace mfgk
