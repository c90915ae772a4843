#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/model.hpp"
#include "mfgk/rng.hpp"

namespace mfgk {

/// Generator of the controlled chain applied to g at state x:
/// sum_{y != x} lambda(t,x,y,a,p) (g(y) - g(x)).
inline double generator_apply(const ModelSpec& spec, double t, std::size_t x, const Action& a,
                              std::span<const double> p, std::span<const double> g) noexcept {
  double acc = 0.0;
  for (std::size_t y = 0; y < spec.d; ++y) {
    if (y == x) continue;
    acc += spec.rate(t, x, y, a, p) * (g[y] - g[x]);
  }
  return acc;
}

inline double pre_hamiltonian(const ModelSpec& spec, double t, std::size_t x, const Action& a,
                              std::span<const double> p, std::span<const double> g) noexcept {
  return generator_apply(spec, t, x, a, p, g) + spec.running_cost(t, x, a, p);
}

struct HamiltonianValue {
  Action minimizer;
  double value = 0.0;
};

/// Unique minimizer of the pre-Hamiltonian over the action set.
///
/// ControlledRate: H is separable in the off-diagonal components, each a
/// convex parabola theta a_y^2 + a_y (g(y) - g(x)) on [0, M], so the
/// minimizer is the clamped vertex. The self-component a_x only adds cost
/// and is set to zero. FiniteAction: exhaustive scan, lowest index on ties.
inline HamiltonianValue minimize_hamiltonian(const ModelSpec& spec, double t, std::size_t x,
                                             std::span<const double> p, std::span<const double> g) {
  if (spec.family == Family::ControlledRate) {
    const double theta = spec.controlled.theta;
    const double bound = spec.controlled.action_bound;
    HamiltonianValue out{spec.zero_action(), 0.0};
    for (std::size_t y = 0; y < spec.d; ++y) {
      if (y == x) continue;
      out.minimizer.rates[y] = std::clamp(-(g[y] - g[x]) / (2.0 * theta), 0.0, bound);
    }
    out.value = pre_hamiltonian(spec, t, x, out.minimizer, p, g);
    return out;
  }
  HamiltonianValue best{Action{0, {}}, INFINITY};
  for (std::size_t k = 0; k < spec.finite.n_actions; ++k) {
    const Action a{k, {}};
    const double h = pre_hamiltonian(spec, t, x, a, p, g);
    if (h < best.value) best = {a, h};
  }
  return best;
}

struct MinimizerLipschitzReport {
  std::size_t samples = 0;
  double max_p_ratio = 0.0;  // |a*(p,g) - a*(q,g)| / |p - q|
  double max_g_ratio = 0.0;  // |a*(p,g) - a*(p,h)| / |g - h|
  double p_bound = 0.0;      // K_a / theta
  double g_bound = 0.0;      // 1 / theta
  std::size_t violations = 0;
};

/// Samples the Lipschitz behaviour of the minimizer map in the measure and in
/// the value vector and compares it to K_a / theta and 1 / theta.
inline MinimizerLipschitzReport minimizer_lipschitz_probe(const ModelSpec& spec, std::size_t n_samples,
                                                          std::uint64_t seed, double tol = 1e-12) {
  if (spec.family != Family::ControlledRate)
    throw Error(Errc::FamilyUnsupported, "minimizer Lipschitz probe needs the ControlledRate family");
  const double theta = spec.controlled.theta;
  const double k_a = spec.derived ? spec.derived->K_a : 0.0;
  MinimizerLipschitzReport r;
  r.p_bound = k_a / theta;
  r.g_bound = 1.0 / theta;
  PhiloxStream rng(seed, 0, 1);
  const double scale = 4.0 * theta * spec.controlled.action_bound + 1.0;
  auto random_vector = [&] {
    std::vector<double> v(spec.d);
    for (auto& e : v) e = (2.0 * rng.next_uniform() - 1.0) * scale;
    return v;
  };
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = rng.next_uniform() * spec.T;
    const std::size_t x = rng.next_index(spec.d);
    const auto p = random_simplex_point(rng, spec.d);
    const auto q = random_simplex_point(rng, spec.d);
    const auto g = random_vector();
    auto h = g;
    // Half the probes perturb g locally so the clamp is often inactive.
    if (i % 2 == 0) {
      h = random_vector();
    } else {
      for (auto& e : h) e += 0.1 * (2.0 * rng.next_uniform() - 1.0);
    }

    const auto a_pg = minimize_hamiltonian(spec, t, x, p, g).minimizer.rates;
    const auto a_qg = minimize_hamiltonian(spec, t, x, q, g).minimizer.rates;
    const auto a_ph = minimize_hamiltonian(spec, t, x, p, h).minimizer.rates;

    const double dp = euclidean_distance(p, q);
    const double dg = euclidean_distance(g, h);
    const double da_p = euclidean_distance(a_pg, a_qg);
    const double da_g = euclidean_distance(a_pg, a_ph);
    if (dp > 0.0) r.max_p_ratio = std::max(r.max_p_ratio, da_p / dp);
    if (dg > 0.0) r.max_g_ratio = std::max(r.max_g_ratio, da_g / dg);
    if (da_p > r.p_bound * dp + tol) ++r.violations;
    if (da_g > r.g_bound * dg + tol) ++r.violations;
    ++r.samples;
  }
  return r;
}

}  // namespace mfgk
