#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/flow.hpp"
#include "mfgk/hamiltonian.hpp"
#include "mfgk/model.hpp"
#include "mfgk/rk4.hpp"

namespace mfgk {

/// W(t_k, x) on the model grid, row-major (node, state).
struct ValueFunction {
  TimeGrid grid;
  std::size_t d = 0;
  std::vector<double> W;

  std::span<const double> at(std::size_t k) const { return {W.data() + k * d, d}; }
  std::span<double> at(std::size_t k) { return {W.data() + k * d, d}; }
};

/// Feedback control sampled at grid nodes, held constant on [t_k, t_{k+1}).
struct FeedbackPolicy {
  TimeGrid grid;
  std::size_t d = 0;
  std::vector<Action> actions;  // node * d + state

  const Action& at(std::size_t k, std::size_t x) const { return actions[k * d + x]; }
  Action& at(std::size_t k, std::size_t x) { return actions[k * d + x]; }
  const Action& at_time(double t, std::size_t x) const { return at(grid.interval(t), x); }
};

struct HjbSolution {
  ValueFunction value;
  FeedbackPolicy policy;
};

inline FeedbackPolicy constant_policy(const TimeGrid& grid, const std::vector<Action>& per_state) {
  FeedbackPolicy p{grid, per_state.size(), {}};
  p.actions.reserve(grid.nodes() * per_state.size());
  for (std::size_t k = 0; k < grid.nodes(); ++k) p.actions.insert(p.actions.end(), per_state.begin(), per_state.end());
  return p;
}

inline Simplex terminal_measure(const MeasureFlow& m) { return m.simplex(m.grid.steps()); }

/// Psi_x = psi(x, m(T)).
inline std::vector<double> terminal_vector(const ModelSpec& spec, std::span<const double> mT) {
  std::vector<double> psi(spec.d);
  for (std::size_t x = 0; x < spec.d; ++x) psi[x] = spec.terminal_cost(x, mT);
  return psi;
}

/// F_x(t, w) = min_a H(t, x, a, p, w).
inline void hamiltonian_field(const ModelSpec& spec, double t, std::span<const double> p, std::span<const double> w,
                              std::span<double> out) {
  for (std::size_t x = 0; x < spec.d; ++x) out[x] = minimize_hamiltonian(spec, t, x, p, w).value;
}

namespace detail {

inline void require_finite_values(std::span<const double> v, const char* where) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(Errc::NonFiniteValue, where);
}

inline void require_same_grid(const ModelSpec& spec, const TimeGrid& grid) {
  if (!(grid == TimeGrid(spec))) throw Error(Errc::InvalidModel, "input is not on the model grid");
}

}  // namespace detail

/// Integrates dW/dt = -F(t, W) backward from W(T) = Psi with RK4, the action
/// re-minimized at every stage and m(t) interpolated at stage times. The
/// policy stores the node minimizers.
inline HjbSolution solve_hjb(const ModelSpec& spec, const MeasureFlow& m) {
  detail::require_same_grid(spec, m.grid);
  const TimeGrid grid = m.grid;
  const std::size_t d = spec.d;
  HjbSolution sol{ValueFunction{grid, d, std::vector<double>(grid.nodes() * d)},
                  FeedbackPolicy{grid, d, std::vector<Action>(grid.nodes() * d)}};

  std::vector<double> w = terminal_vector(spec, m.at(grid.steps()));
  std::vector<double> p(d);
  auto rhs = [&](double t, std::span<const double> y, std::span<double> dydt) {
    interpolate_into(m, t, p);
    hamiltonian_field(spec, t, p, y, dydt);
    for (auto& v : dydt) v = -v;
  };
  auto record = [&](std::size_t k) {
    std::copy(w.begin(), w.end(), sol.value.at(k).begin());
    const double t = grid.time(k);
    for (std::size_t x = 0; x < d; ++x) sol.policy.at(k, x) = minimize_hamiltonian(spec, t, x, m.at(k), w).minimizer;
  };

  Rk4 rk4(d);
  record(grid.steps());
  for (std::size_t k = grid.steps(); k-- > 0;) {
    rk4.step(rhs, grid.time(k + 1), -grid.dt(), w);
    detail::require_finite_values(w, "HJB integration produced a non-finite value");
    record(k);
  }
  return sol;
}

/// max over nodes of |W(t) - Psi - int_t^T F(s, W(s)) ds|_inf, trapezoid rule
/// on the grid.
inline double hjb_residual(const ModelSpec& spec, const MeasureFlow& m, const ValueFunction& V) {
  const TimeGrid& grid = V.grid;
  const std::size_t d = spec.d;
  const auto psi = terminal_vector(spec, m.at(grid.steps()));
  std::vector<double> f_next(d), f_cur(d), integral(d, 0.0);
  hamiltonian_field(spec, grid.time(grid.steps()), m.at(grid.steps()), V.at(grid.steps()), f_next);

  double worst = 0.0;
  for (std::size_t x = 0; x < d; ++x) worst = std::max(worst, std::abs(V.at(grid.steps())[x] - psi[x]));
  for (std::size_t k = grid.steps(); k-- > 0;) {
    hamiltonian_field(spec, grid.time(k), m.at(k), V.at(k), f_cur);
    const double h = grid.time(k + 1) - grid.time(k);
    for (std::size_t x = 0; x < d; ++x) {
      integral[x] += 0.5 * h * (f_cur[x] + f_next[x]);
      worst = std::max(worst, std::abs(V.at(k)[x] - psi[x] - integral[x]));
    }
    f_next.swap(f_cur);
  }
  return worst;
}

/// Cost-to-go J(t_k, x) of a node-held feedback policy against the measure
/// flow m: the linear backward ODE
///   dJ/dt(t,x) = -[sum_y lambda(t,x,y,gamma(t,x),m(t)) (J(t,y) - J(t,x)) + c(t,x,gamma(t,x),m(t))],
/// J(T) = psi(., m(T)), integrated by RK4 with the node-k action on [t_k, t_{k+1}).
inline ValueFunction evaluate_cost_to_go(const ModelSpec& spec, const MeasureFlow& m, const FeedbackPolicy& policy) {
  detail::require_same_grid(spec, m.grid);
  detail::require_same_grid(spec, policy.grid);
  const TimeGrid grid = m.grid;
  const std::size_t d = spec.d;
  ValueFunction J{grid, d, std::vector<double>(grid.nodes() * d)};
  std::vector<double> j = terminal_vector(spec, m.at(grid.steps()));
  std::copy(j.begin(), j.end(), J.at(grid.steps()).begin());

  std::vector<double> p(d);
  std::size_t interval = 0;
  auto rhs = [&](double t, std::span<const double> y, std::span<double> dydt) {
    interpolate_into(m, t, p);
    for (std::size_t x = 0; x < d; ++x) {
      const Action& a = policy.at(interval, x);
      dydt[x] = -(generator_apply(spec, t, x, a, p, y) + spec.running_cost(t, x, a, p));
    }
  };
  Rk4 rk4(d);
  for (std::size_t k = grid.steps(); k-- > 0;) {
    interval = k;
    rk4.step(rhs, grid.time(k + 1), -grid.dt(), j);
    detail::require_finite_values(j, "cost evaluation produced a non-finite value");
    std::copy(j.begin(), j.end(), J.at(k).begin());
  }
  return J;
}

/// Expected cost E[J(0, xi)] with xi ~ m0.
inline double evaluate_cost(const ModelSpec& spec, const MeasureFlow& m, const FeedbackPolicy& policy) {
  const ValueFunction J = evaluate_cost_to_go(spec, m, policy);
  double acc = 0.0;
  for (std::size_t x = 0; x < spec.d; ++x) acc += spec.m0[x] * J.at(0)[x];
  return acc;
}

struct FLipschitzReport {
  std::size_t samples = 0;
  double max_ratio = 0.0;  // |F(w) - F(z)|_inf / |w - z|_inf
  double bound = 0.0;      // 2 nu(U)
  std::size_t violations = 0;
};

/// Random probes of the sup-norm Lipschitz bound of w -> F(t, w).
inline FLipschitzReport f_lipschitz_probe(const ModelSpec& spec, const MeasureFlow& m, std::size_t n_samples,
                                          std::uint64_t seed, double tol = 1e-9) {
  FLipschitzReport r;
  r.bound = 2.0 * spec.nu_U();
  PhiloxStream rng(seed, 0, 2);
  const std::size_t d = spec.d;
  std::vector<double> w(d), z(d), fw(d), fz(d), p(d);
  const double scale = spec.derived ? std::max(1.0, 2.0 * spec.derived->M_V) : 5.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = rng.next_uniform() * spec.T;
    interpolate_into(m, t, p);
    for (std::size_t x = 0; x < d; ++x) w[x] = (2.0 * rng.next_uniform() - 1.0) * scale;
    switch (i % 3) {
      case 0:  // independent pair
        for (std::size_t x = 0; x < d; ++x) z[x] = (2.0 * rng.next_uniform() - 1.0) * scale;
        break;
      case 1:  // small perturbation
        for (std::size_t x = 0; x < d; ++x) z[x] = w[x] + 1e-2 * (2.0 * rng.next_uniform() - 1.0);
        break;
      default: {  // constant shift
        const double c = (2.0 * rng.next_uniform() - 1.0) * scale;
        for (std::size_t x = 0; x < d; ++x) z[x] = w[x] + c;
      }
    }
    hamiltonian_field(spec, t, p, w, fw);
    hamiltonian_field(spec, t, p, z, fz);
    double df = 0.0;
    double dw = 0.0;
    for (std::size_t x = 0; x < d; ++x) {
      df = std::max(df, std::abs(fw[x] - fz[x]));
      dw = std::max(dw, std::abs(w[x] - z[x]));
    }
    if (dw > 0.0) r.max_ratio = std::max(r.max_ratio, df / dw);
    if (df > r.bound * dw + tol) ++r.violations;
    ++r.samples;
  }
  return r;
}

}  // namespace mfgk
