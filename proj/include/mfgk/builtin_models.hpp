#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/model.hpp"
#include "mfgk/rng.hpp"

namespace mfgk::models {

inline std::vector<double> identity_table(std::size_t d, double scale = 1.0) {
  std::vector<double> t(d * d, 0.0);
  for (std::size_t x = 0; x < d; ++x) t[x * d + x] = scale;
  return t;
}

/// Two states, quadratic control cost, congestion costs c1(x,p) = p_x and
/// psi(x,p) = p_x. Monotone; rates do not depend on the measure.
inline ModelSpec two_state_controlled(double T = 1.0, std::size_t n_steps = 1000) {
  ModelSpec s;
  s.d = 2;
  s.T = T;
  s.n_steps = n_steps;
  s.m0 = {0.8, 0.2};
  s.family = Family::ControlledRate;
  s.controlled = ControlledRateParams{1.0, 0.1, {}, 0.5, 11};
  s.running = AffineInMeasure{{}, identity_table(2)};
  s.terminal = AffineInMeasure{{}, identity_table(2)};
  return validate_model(s);
}

/// Three-state congestion model with an asymmetric state preference.
inline ModelSpec three_state_monotone(double T = 1.0, std::size_t n_steps = 1000) {
  ModelSpec s;
  s.d = 3;
  s.T = T;
  s.n_steps = n_steps;
  s.m0 = {0.6, 0.3, 0.1};
  s.family = Family::ControlledRate;
  s.controlled = ControlledRateParams{1.0, 0.1, {}, 0.5, 11};
  s.running = AffineInMeasure{{0.0, 0.2, 0.4}, identity_table(3)};
  s.terminal = AffineInMeasure{{0.3, 0.0, 0.1}, identity_table(3, 0.5)};
  return validate_model(s);
}

/// Interacting ControlledRate model whose rates also depend on the measure.
inline ModelSpec two_state_rate_coupled(double T = 1.0, std::size_t n_steps = 1000) {
  ModelSpec s = two_state_controlled(T, n_steps);
  s.controlled.zeta_weights = {0.0, 0.5};
  s.derived.reset();
  return validate_model(s);
}

/// No measure dependence anywhere: players are independent.
inline ModelSpec decoupled(std::size_t d = 2, double T = 1.0, std::size_t n_steps = 1000) {
  ModelSpec s;
  s.d = d;
  s.T = T;
  s.n_steps = n_steps;
  s.m0.assign(d, 1.0 / static_cast<double>(d));
  s.family = Family::ControlledRate;
  s.controlled = ControlledRateParams{1.0, 0.2, {}, 0.5, 11};
  s.running.offset.resize(d);
  s.terminal.offset.resize(d);
  for (std::size_t x = 0; x < d; ++x) {
    s.running.offset[x] = 0.5 * static_cast<double>(x) / static_cast<double>(d);
    s.terminal.offset[x] = static_cast<double>(x) / static_cast<double>(d);
  }
  return validate_model(s);
}

/// One action, unit rates in both directions, started at state 1: the law
/// is pi_1(t) = (1 + e^{-2t}) / 2.
inline ModelSpec symmetric_two_state(double T = 1.0, std::size_t n_steps = 2000) {
  ModelSpec s;
  s.d = 2;
  s.T = T;
  s.n_steps = n_steps;
  s.m0 = {1.0, 0.0};
  s.family = Family::FiniteAction;
  s.finite.rate_bound = 1.0;
  s.finite.n_actions = 1;
  s.finite.rate_base = {0.0, 1.0, 1.0, 0.0};
  return validate_model(s);
}

/// Actions {0, 1}; action a switches on rate a towards the other state at
/// control cost a / 2; terminal cost 1 in state 2. From state 2 the optimal
/// action is 1 throughout, giving W_2(0) = (1 + e^{-T}) / 2 at T = 1.
inline ModelSpec finite_action_example(double T = 1.0, std::size_t n_steps = 1000) {
  ModelSpec s;
  s.d = 2;
  s.T = T;
  s.n_steps = n_steps;
  s.m0 = {0.5, 0.5};
  s.family = Family::FiniteAction;
  s.finite.rate_bound = 1.0;
  s.finite.n_actions = 2;
  s.finite.rate_base = {0.0, 0.0, 0.0, 0.0,   // a = 0
                        0.0, 1.0, 1.0, 0.0};  // a = 1
  s.finite.action_cost = {0.0, 0.0, 0.5, 0.5};
  s.terminal = AffineInMeasure{{0.0, 1.0}, {}};
  return validate_model(s);
}

/// Random FiniteAction model with d states and n_actions actions, measure-
/// dependent rates and costs; all rates in [0, 1].
inline ModelSpec random_finite(PhiloxStream& rng, std::size_t d, std::size_t n_actions, double T = 1.0,
                               std::size_t n_steps = 1000) {
  ModelSpec s;
  s.d = d;
  s.T = T;
  s.n_steps = n_steps;
  s.m0 = random_simplex_point(rng, d);
  s.family = Family::FiniteAction;
  s.finite.rate_bound = 1.0;
  s.finite.n_actions = n_actions;
  s.finite.rate_base.assign(n_actions * d * d, 0.0);
  s.finite.rate_slope.assign(n_actions * d * d * d, 0.0);
  s.finite.action_cost.resize(n_actions * d);
  for (std::size_t a = 0; a < n_actions; ++a)
    for (std::size_t x = 0; x < d; ++x) {
      s.finite.action_cost[a * d + x] = 0.5 * rng.next_uniform();
      for (std::size_t y = 0; y < d; ++y) {
        if (x == y) continue;
        // base + slope . p stays within [0.05, 0.85] on the simplex
        const std::size_t i = (a * d + x) * d + y;
        s.finite.rate_base[i] = 0.2 + 0.5 * rng.next_uniform();
        for (std::size_t z = 0; z < d; ++z) s.finite.rate_slope[i * d + z] = 0.3 * (rng.next_uniform() - 0.5);
      }
    }
  s.running.offset.resize(d);
  s.running.table.resize(d * d);
  s.terminal.offset.resize(d);
  s.terminal.table.resize(d * d);
  for (auto& v : s.running.offset) v = rng.next_uniform();
  for (auto& v : s.running.table) v = rng.next_uniform() - 0.5;
  for (auto& v : s.terminal.offset) v = rng.next_uniform();
  for (auto& v : s.terminal.table) v = rng.next_uniform() - 0.5;
  return validate_model(s);
}

/// Random ControlledRate model with measure-dependent zeta and costs.
inline ModelSpec random_controlled(PhiloxStream& rng, std::size_t d, double T = 1.0, std::size_t n_steps = 1000) {
  ModelSpec s;
  s.d = d;
  s.T = T;
  s.n_steps = n_steps;
  s.m0 = random_simplex_point(rng, d);
  s.family = Family::ControlledRate;
  s.controlled.action_bound = 0.5 + rng.next_uniform();
  s.controlled.kappa = 0.05 + 0.2 * rng.next_uniform();
  s.controlled.theta = 0.25 + rng.next_uniform();
  s.controlled.zeta_weights.resize(d);
  for (auto& w : s.controlled.zeta_weights) w = 0.3 * rng.next_uniform();
  s.running.offset.resize(d);
  s.running.table.resize(d * d);
  s.terminal.offset.resize(d);
  s.terminal.table.resize(d * d);
  for (auto& v : s.running.offset) v = rng.next_uniform();
  for (auto& v : s.running.table) v = 2.0 * rng.next_uniform() - 1.0;
  for (auto& v : s.terminal.offset) v = rng.next_uniform();
  for (auto& v : s.terminal.table) v = 2.0 * rng.next_uniform() - 1.0;
  return validate_model(s);
}

inline std::vector<std::string_view> builtin_names() {
  return {"two_state_controlled", "three_state_monotone", "two_state_rate_coupled", "decoupled",
          "symmetric_two_state", "finite_action_example"};
}

inline ModelSpec builtin(std::string_view name) {
  if (name == "two_state_controlled") return two_state_controlled();
  if (name == "three_state_monotone") return three_state_monotone();
  if (name == "two_state_rate_coupled") return two_state_rate_coupled();
  if (name == "decoupled") return decoupled();
  if (name == "symmetric_two_state") return symmetric_two_state();
  if (name == "finite_action_example") return finite_action_example();
  throw Error(Errc::InvalidConfig, "unknown built-in model '" + std::string(name) + "'");
}

}  // namespace mfgk::models
