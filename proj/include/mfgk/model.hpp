#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/rng.hpp"
#include "mfgk/simplex.hpp"

namespace mfgk {

enum class Family { ControlledRate, FiniteAction };

/// A function of (state, measure) of the form offset[x] + table.row(x) . p.
/// Both parts are optional; empty means zero.
struct AffineInMeasure {
  std::vector<double> offset;  // d
  std::vector<double> table;   // d x d, row-major

  double operator()(std::size_t d, std::size_t x, std::span<const double> p) const noexcept {
    double value = offset.empty() ? 0.0 : offset[x];
    if (!table.empty()) {
      const double* row = table.data() + x * d;
      for (std::size_t z = 0; z < d; ++z) value += row[z] * p[z];
    }
    return value;
  }

  bool depends_on_measure() const noexcept {
    return std::any_of(table.begin(), table.end(), [](double v) { return v != 0.0; });
  }

  double row_norm(std::size_t d, std::size_t x) const noexcept {
    if (table.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t z = 0; z < d; ++z) acc += table[x * d + z] * table[x * d + z];
    return std::sqrt(acc);
  }
};

/// lambda(x,y,a,p) = a_y + zeta(p) for y != x with zeta(p) = kappa + w.p, and
/// quadratic control cost theta |a|^2.
struct ControlledRateParams {
  double action_bound = 1.0;  // M, actions live in [0, M]^d
  double kappa = 0.1;
  std::vector<double> zeta_weights;  // empty means w = 0
  double theta = 0.5;
  std::size_t action_grid = 11;  // points per axis when discretizing actions
};

/// Finite action set with rate tables lambda(x,y,a,p) = base[a][x][y] +
/// sum_z slope[a][x][y][z] p_z and control cost c0[a][x].
struct FiniteActionParams {
  double rate_bound = 1.0;  // M
  std::size_t n_actions = 1;
  std::vector<double> rate_base;    // n_actions * d * d
  std::vector<double> rate_slope;   // n_actions * d * d * d, or empty
  std::vector<double> action_cost;  // n_actions * d, or empty
};

/// An action: `rates` (size d) for ControlledRate, `index` for FiniteAction.
struct Action {
  std::size_t index = 0;
  std::vector<double> rates;

  friend bool operator==(const Action&, const Action&) = default;
};

/// Constants derived from the model data by validate_model.
struct DerivedConstants {
  double rate_bound = 0.0;   // sup of off-diagonal rates
  double nu_U = 0.0;         // total mass of the Poisson intensity, d * rate_bound
  double K = 0.0;            // flow Lipschitz bound 2 nu(U) sqrt(d)
  double K1 = 0.0;           // 2 nu(U) d
  double K2 = 0.0;           // cost Lipschitz constant (analytic, affine tables)
  double K2_sampled = 0.0;   // largest sampled cost difference ratio
  double K_zeta = 0.0;
  double K_a = 0.0;          // Lipschitz constant of grad_a c in p
  double M_zeta = 0.0;
  double max_abs_running = 0.0;
  double max_abs_terminal = 0.0;
  double M_V = 0.0;          // a priori bound T max|c| + max|psi|
};

struct ModelSpec {
  std::size_t d = 2;
  double T = 1.0;
  std::vector<double> m0;
  std::size_t n_steps = 1000;
  Family family = Family::ControlledRate;
  ControlledRateParams controlled;
  FiniteActionParams finite;
  AffineInMeasure running;   // c1(x,p)
  AffineInMeasure terminal;  // psi(x,p)
  std::optional<DerivedConstants> derived;

  double zeta(std::span<const double> p) const noexcept {
    double value = controlled.kappa;
    if (!controlled.zeta_weights.empty())
      for (std::size_t z = 0; z < d; ++z) value += controlled.zeta_weights[z] * p[z];
    return value;
  }

  /// Off-diagonal transition rate x -> y; zero on the diagonal.
  double rate(double /*t*/, std::size_t x, std::size_t y, const Action& a, std::span<const double> p) const noexcept {
    if (x == y) return 0.0;
    if (family == Family::ControlledRate) return a.rates[y] + zeta(p);
    const std::size_t base = (a.index * d + x) * d + y;
    double value = finite.rate_base[base];
    if (!finite.rate_slope.empty()) {
      const double* slope = finite.rate_slope.data() + base * d;
      for (std::size_t z = 0; z < d; ++z) value += slope[z] * p[z];
    }
    return value;
  }

  /// Control part c0(x,a) of the running cost.
  double action_cost(std::size_t x, const Action& a) const noexcept {
    if (family == Family::ControlledRate) {
      double sq = 0.0;
      for (double v : a.rates) sq += v * v;
      return controlled.theta * sq;
    }
    return finite.action_cost.empty() ? 0.0 : finite.action_cost[a.index * d + x];
  }

  double running_cost(double /*t*/, std::size_t x, const Action& a, std::span<const double> p) const noexcept {
    return action_cost(x, a) + running(d, x, p);
  }

  double terminal_cost(std::size_t x, std::span<const double> p) const noexcept { return terminal(d, x, p); }

  double rate_bound() const noexcept {
    if (family == Family::FiniteAction) return finite.rate_bound;
    double zmax = -INFINITY;
    for (std::size_t z = 0; z < d; ++z) {
      const double w = controlled.zeta_weights.empty() ? 0.0 : controlled.zeta_weights[z];
      zmax = std::max(zmax, controlled.kappa + w);
    }
    return controlled.action_bound + zmax;
  }

  double nu_U() const noexcept { return static_cast<double>(d) * rate_bound(); }
  double flow_lipschitz_bound() const noexcept { return 2.0 * nu_U() * std::sqrt(static_cast<double>(d)); }

  bool rates_depend_on_measure() const noexcept {
    if (family == Family::ControlledRate)
      return std::any_of(controlled.zeta_weights.begin(), controlled.zeta_weights.end(),
                         [](double w) { return w != 0.0; });
    return std::any_of(finite.rate_slope.begin(), finite.rate_slope.end(), [](double v) { return v != 0.0; });
  }

  bool costs_depend_on_measure() const noexcept {
    return running.depends_on_measure() || terminal.depends_on_measure();
  }

  std::size_t action_count() const noexcept { return family == Family::FiniteAction ? finite.n_actions : 0; }

  Action zero_action() const {
    if (family == Family::ControlledRate) return Action{0, std::vector<double>(d, 0.0)};
    return Action{0, {}};
  }

  bool valid_action(const Action& a) const noexcept {
    if (family == Family::FiniteAction) return a.index < finite.n_actions;
    if (a.rates.size() != d) return false;
    return std::all_of(a.rates.begin(), a.rates.end(),
                       [&](double v) { return v >= 0.0 && v <= controlled.action_bound; });
  }
};

namespace detail {

inline void require_size(const std::vector<double>& v, std::size_t n, bool allow_empty, const char* what) {
  if ((allow_empty && v.empty()) || v.size() == n) return;
  throw Error(Errc::InvalidModel, std::string(what) + " has size " + std::to_string(v.size()) +
                                      ", expected " + std::to_string(n));
}

inline void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(Errc::InvalidModel, std::string(what) + " contains a non-finite entry");
}

/// Max over simplex vertices of |phi(x, e_v)|; exact for affine phi.
inline double max_abs_on_vertices(const ModelSpec& s, const AffineInMeasure& phi, double shift_lo,
                                  double shift_hi) {
  double best = 0.0;
  for (std::size_t x = 0; x < s.d; ++x)
    for (std::size_t v = 0; v < s.d; ++v) {
      const Simplex e = Simplex::vertex(s.d, v);
      const double base = phi(s.d, x, e.values());
      best = std::max({best, std::abs(base + shift_lo), std::abs(base + shift_hi)});
    }
  return best;
}

inline DerivedConstants derive_constants(const ModelSpec& s) {
  DerivedConstants c;
  const double d = static_cast<double>(s.d);
  c.rate_bound = s.rate_bound();
  c.nu_U = d * c.rate_bound;
  c.K = 2.0 * c.nu_U * std::sqrt(d);
  c.K1 = 2.0 * c.nu_U * d;

  if (s.family == Family::ControlledRate) {
    double wn = 0.0;
    double wmax = -INFINITY;
    for (std::size_t z = 0; z < s.d; ++z) {
      const double w = s.controlled.zeta_weights.empty() ? 0.0 : s.controlled.zeta_weights[z];
      wn += w * w;
      wmax = std::max(wmax, w);
    }
    c.K_zeta = std::sqrt(wn);
    c.M_zeta = s.controlled.kappa + wmax;
    c.K_a = 0.0;  // grad_a (theta |a|^2) = 2 theta a has no p dependence
  }

  // Running cost ranges over [c1, c1 + max c0]; c1 affine so vertices suffice.
  double c0_lo = 0.0;
  double c0_hi = 0.0;
  if (s.family == Family::ControlledRate) {
    c0_hi = s.controlled.theta * d * s.controlled.action_bound * s.controlled.action_bound;
  } else if (!s.finite.action_cost.empty()) {
    c0_lo = *std::min_element(s.finite.action_cost.begin(), s.finite.action_cost.end());
    c0_hi = *std::max_element(s.finite.action_cost.begin(), s.finite.action_cost.end());
  }
  c.max_abs_running = max_abs_on_vertices(s, s.running, c0_lo, c0_hi);
  c.max_abs_terminal = max_abs_on_vertices(s, s.terminal, 0.0, 0.0);
  c.M_V = s.T * c.max_abs_running + c.max_abs_terminal;

  // K2 as max of the per-argument Lipschitz constants (triangle inequality).
  double lp_c = 0.0;
  double lp_psi = 0.0;
  for (std::size_t x = 0; x < s.d; ++x) {
    lp_c = std::max(lp_c, s.running.row_norm(s.d, x));
    lp_psi = std::max(lp_psi, s.terminal.row_norm(s.d, x));
  }
  const double l_p = lp_c + lp_psi;

  double l_a = 0.0;
  if (s.family == Family::ControlledRate) {
    l_a = 2.0 * s.controlled.theta * s.controlled.action_bound * std::sqrt(d);
  } else if (!s.finite.action_cost.empty()) {
    for (std::size_t x = 0; x < s.d; ++x)
      for (std::size_t a = 0; a < s.finite.n_actions; ++a)
        for (std::size_t b = 0; b < s.finite.n_actions; ++b)
          l_a = std::max(l_a, std::abs(s.finite.action_cost[a * s.d + x] - s.finite.action_cost[b * s.d + x]));
  }

  double l_x = 0.0;
  const std::size_t n_act = s.family == Family::FiniteAction ? s.finite.n_actions : 1;
  for (std::size_t x = 0; x < s.d; ++x)
    for (std::size_t y = 0; y < s.d; ++y) {
      if (x == y) continue;
      const double dist = std::abs(static_cast<double>(x) - static_cast<double>(y));
      for (std::size_t v = 0; v < s.d; ++v) {
        const Simplex e = Simplex::vertex(s.d, v);
        for (std::size_t a = 0; a < n_act; ++a) {
          const Action act = s.family == Family::FiniteAction ? Action{a, {}} : s.zero_action();
          const double dc = std::abs(s.running_cost(0.0, x, act, e.values()) - s.running_cost(0.0, y, act, e.values()));
          const double dpsi = std::abs(s.terminal_cost(x, e.values()) - s.terminal_cost(y, e.values()));
          l_x = std::max(l_x, (dc + dpsi) / dist);
        }
      }
    }
  c.K2 = std::max({l_p, l_a, l_x});

  // Sampled ratio of the full cost-difference condition, reported only.
  PhiloxStream rng(0x6b32u);
  double sampled = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const std::size_t x = rng.next_index(s.d);
    const std::size_t y = rng.next_index(s.d);
    const auto p = random_simplex_point(rng, s.d);
    const auto q = random_simplex_point(rng, s.d);
    Action a = s.zero_action();
    Action b = s.zero_action();
    double da = 0.0;
    if (s.family == Family::ControlledRate) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.d; ++k) {
        a.rates[k] = rng.next_uniform() * s.controlled.action_bound;
        b.rates[k] = rng.next_uniform() * s.controlled.action_bound;
        acc += (a.rates[k] - b.rates[k]) * (a.rates[k] - b.rates[k]);
      }
      da = std::sqrt(acc);
    } else {
      a.index = rng.next_index(s.finite.n_actions);
      b.index = rng.next_index(s.finite.n_actions);
      da = a.index == b.index ? 0.0 : 1.0;
    }
    const double denom = std::abs(static_cast<double>(x) - static_cast<double>(y)) + da + euclidean_distance(p, q);
    if (denom <= 0.0) continue;
    const double num = std::abs(s.running_cost(0.0, x, a, p) - s.running_cost(0.0, y, b, q)) +
                       std::abs(s.terminal_cost(x, p) - s.terminal_cost(y, q));
    sampled = std::max(sampled, num / denom);
  }
  c.K2_sampled = sampled;
  return c;
}

}  // namespace detail

/// Checks the standing assumptions on the model data and returns a copy with
/// the derived constants filled in.
inline ModelSpec validate_model(ModelSpec spec) {
  if (spec.d < 2) throw Error(Errc::InvalidModel, "state count d must be at least 2");
  if (!(spec.T > 0.0) || !std::isfinite(spec.T)) throw Error(Errc::DegenerateHorizon, "horizon T must be positive");
  if (spec.n_steps < 1) throw Error(Errc::InvalidModel, "n_steps must be at least 1");
  if (spec.m0.size() != spec.d || !is_simplex(spec.m0))
    throw Error(Errc::NonSimplexInitial, "m0 is not a probability vector on d states");

  const std::size_t d = spec.d;
  detail::require_size(spec.running.offset, d, true, "running.offset");
  detail::require_size(spec.running.table, d * d, true, "running.table");
  detail::require_size(spec.terminal.offset, d, true, "terminal.offset");
  detail::require_size(spec.terminal.table, d * d, true, "terminal.table");
  for (const auto* v : {&spec.running.offset, &spec.running.table, &spec.terminal.offset, &spec.terminal.table})
    detail::require_finite(*v, "cost table");

  if (spec.family == Family::ControlledRate) {
    const auto& c = spec.controlled;
    detail::require_size(c.zeta_weights, d, true, "zeta_weights");
    detail::require_finite(c.zeta_weights, "zeta_weights");
    if (!(c.theta > 0.0)) throw Error(Errc::InvalidModel, "theta must be positive");
    if (!(c.kappa > 0.0)) throw Error(Errc::InvalidModel, "kappa must be positive");
    if (!(c.action_bound >= 0.0) || !std::isfinite(c.action_bound))
      throw Error(Errc::InvalidModel, "action bound M must be nonnegative");
    if (c.action_grid < 2) throw Error(Errc::InvalidModel, "action_grid must be at least 2");
    for (std::size_t v = 0; v < d; ++v) {
      const Simplex e = Simplex::vertex(d, v);
      if (spec.zeta(e.values()) < 0.0) throw Error(Errc::NegativeRate, "zeta is negative at a simplex vertex");
    }
  } else {
    auto& f = spec.finite;
    if (f.n_actions < 1) throw Error(Errc::InvalidModel, "finite action set is empty");
    detail::require_size(f.rate_base, f.n_actions * d * d, false, "rate_base");
    detail::require_size(f.rate_slope, f.n_actions * d * d * d, true, "rate_slope");
    detail::require_size(f.action_cost, f.n_actions * d, true, "action_cost");
    detail::require_finite(f.rate_base, "rate_base");
    detail::require_finite(f.rate_slope, "rate_slope");
    detail::require_finite(f.action_cost, "action_cost");
    if (!(f.rate_bound >= 0.0) || !std::isfinite(f.rate_bound))
      throw Error(Errc::InvalidModel, "rate bound M must be nonnegative");
    for (std::size_t a = 0; a < f.n_actions; ++a)
      for (std::size_t x = 0; x < d; ++x)
        for (std::size_t y = 0; y < d; ++y) {
          if (x == y) continue;
          for (std::size_t v = 0; v < d; ++v) {
            const Simplex e = Simplex::vertex(d, v);
            const double r = spec.rate(0.0, x, y, Action{a, {}}, e.values());
            if (r < 0.0) throw Error(Errc::NegativeRate, "negative transition rate in rate tables");
            if (r > f.rate_bound + 1e-12)
              throw Error(Errc::RateExceedsBound, "transition rate exceeds the declared bound M");
          }
        }
  }
  spec.derived = detail::derive_constants(spec);
  return spec;
}

/// Replaces the continuum of ControlledRate actions by a tensor grid with
/// `action_grid` points per off-diagonal axis. Used to cross-check the closed
/// form minimizer against exhaustive scans.
inline std::vector<Action> discretize_actions(const ModelSpec& spec, std::size_t x) {
  if (spec.family != Family::ControlledRate) throw Error(Errc::FamilyUnsupported, "discretize_actions");
  const std::size_t n = spec.controlled.action_grid;
  const double step = spec.controlled.action_bound / static_cast<double>(n - 1);
  std::vector<Action> out;
  std::vector<std::size_t> digits(spec.d, 0);
  while (true) {
    Action a = spec.zero_action();
    for (std::size_t y = 0; y < spec.d; ++y)
      if (y != x) a.rates[y] = static_cast<double>(digits[y]) * step;
    out.push_back(std::move(a));
    std::size_t k = 0;
    for (; k < spec.d; ++k) {
      if (k == x) continue;
      if (++digits[k] < n) break;
      digits[k] = 0;
    }
    if (k == spec.d) break;
  }
  return out;
}

}  // namespace mfgk
