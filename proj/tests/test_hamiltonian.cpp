#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfgk/builtin_models.hpp"
#include "mfgk/hamiltonian.hpp"
#include "mfgk/model.hpp"
#include "mfgk/rng.hpp"

using namespace mfgk;

namespace {

ModelSpec controlled_d2(double kappa, double M, double theta) {
  ModelSpec s;
  s.d = 2;
  s.m0 = {0.5, 0.5};
  s.controlled = ControlledRateParams{M, kappa, {}, theta, 11};
  return s;  // kappa = 0 is outside the validated class; used only for arithmetic
}

/// Generator as an integral over the mark space U = [0, M]^d: the jump to y
/// happens when u_y falls below lambda(x, y). The integrand is piecewise
/// constant in u_y with a break at lambda, so the midpoint rule on the two
/// segments [0, lambda] and [lambda, M] is exact.
double generator_by_integration(const ModelSpec& s, std::size_t x, const Action& a, const std::vector<double>& p,
                                const std::vector<double>& g, double M) {
  double acc = 0.0;
  for (std::size_t y = 0; y < s.d; ++y) {
    if (y == x) continue;
    const double lam = s.rate(0.0, x, y, a, p);
    const double segments[2][2] = {{0.0, lam}, {lam, M}};
    for (const auto& seg : segments) {
      const double mid = 0.5 * (seg[0] + seg[1]);
      const double jump = mid < lam ? 1.0 : 0.0;
      acc += (seg[1] - seg[0]) * jump * (g[y] - g[x]);
    }
  }
  return acc;
}

}  // namespace

TEST(Generator, ConstantTestFunctionGivesZero) {
  const auto s = models::three_state_monotone();
  const std::vector<double> p{0.2, 0.3, 0.5}, g(3, 4.2);
  for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(generator_apply(s, 0.0, x, Action{0, {0.3, 0.1, 0.7}}, p, g), 0.0);
}

TEST(Generator, SingleTerm) {
  const auto s = models::symmetric_two_state();
  const std::vector<double> p{0.5, 0.5}, g{0.0, 1.0};
  EXPECT_DOUBLE_EQ(generator_apply(s, 0.0, 0, Action{0, {}}, p, g), 1.0);
}

TEST(Generator, MatchesMarkSpaceIntegral) {
  PhiloxStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = models::random_controlled(rng, 3);
    const double M = s.rate_bound();
    const auto p = random_simplex_point(rng, 3);
    std::vector<double> g(3);
    for (auto& v : g) v = 2.0 * rng.next_uniform() - 1.0;
    Action a = s.zero_action();
    for (auto& v : a.rates) v = rng.next_uniform() * s.controlled.action_bound;
    for (std::size_t x = 0; x < 3; ++x)
      EXPECT_NEAR(generator_apply(s, 0.0, x, a, p, g), generator_by_integration(s, x, a, p, g, M), 1e-9);
  }
}

TEST(PreHamiltonian, Arithmetic) {
  const auto s = controlled_d2(0.0, 2.0, 0.5);
  const std::vector<double> p{0.5, 0.5}, g{0.0, 1.0};
  EXPECT_DOUBLE_EQ(pre_hamiltonian(s, 0.0, 0, Action{0, {0.0, 1.0}}, p, g), 1.5);
}

TEST(PreHamiltonian, ZeroActionFormula) {
  auto s = models::three_state_monotone();
  const std::vector<double> p{0.2, 0.3, 0.5}, g{0.4, -1.0, 2.0};
  for (std::size_t x = 0; x < 3; ++x) {
    double expected = s.running(3, x, p);
    for (std::size_t y = 0; y < 3; ++y)
      if (y != x) expected += s.controlled.kappa * (g[y] - g[x]);
    EXPECT_NEAR(pre_hamiltonian(s, 0.0, x, s.zero_action(), p, g), expected, 1e-14);
  }
}

TEST(Minimizer, ClosedFormExamples) {
  const auto s = controlled_d2(0.0, 2.0, 0.5);
  const std::vector<double> p{0.5, 0.5};
  auto r = minimize_hamiltonian(s, 0.0, 0, p, std::vector<double>{0.0, 1.0});
  EXPECT_EQ(r.minimizer.rates, (std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(r.value, 0.0);
  r = minimize_hamiltonian(s, 0.0, 0, p, std::vector<double>{1.0, 0.0});
  EXPECT_EQ(r.minimizer.rates, (std::vector<double>{0.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.value, -0.5);
}

TEST(Minimizer, FiniteTieGoesToLowestIndex) {
  auto s = models::symmetric_two_state();
  s.finite.n_actions = 2;
  s.finite.rate_base = {0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0};
  s.derived.reset();
  s = validate_model(s);
  const auto r = minimize_hamiltonian(s, 0.0, 0, std::vector<double>{0.5, 0.5}, std::vector<double>{0.0, 1.0});
  EXPECT_EQ(r.minimizer.index, 0u);
}

TEST(Minimizer, ShiftInvariance) {
  PhiloxStream rng(3);
  const auto s = models::random_controlled(rng, 3);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_simplex_point(rng, 3);
    std::vector<double> g(3), h(3);
    const double c = 10.0 * (rng.next_uniform() - 0.5);
    for (std::size_t x = 0; x < 3; ++x) {
      g[x] = 3.0 * (rng.next_uniform() - 0.5);
      h[x] = g[x] + c;
    }
    for (std::size_t x = 0; x < 3; ++x) {
      const auto a = minimize_hamiltonian(s, 0.0, x, p, g).minimizer.rates;
      const auto b = minimize_hamiltonian(s, 0.0, x, p, h).minimizer.rates;
      for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(a[y], b[y], 1e-12);
    }
  }
}

TEST(Minimizer, NoProbeActionDoesBetter) {
  PhiloxStream rng(4);
  const auto s = models::random_controlled(rng, 3);
  const auto p = random_simplex_point(rng, 3);
  const std::vector<double> g{0.3, -0.4, 0.9};
  for (std::size_t x = 0; x < 3; ++x) {
    const auto best = minimize_hamiltonian(s, 0.0, x, p, g);
    for (int i = 0; i < 1000; ++i) {
      Action a = s.zero_action();
      for (auto& v : a.rates) v = rng.next_uniform() * s.controlled.action_bound;
      EXPECT_GE(pre_hamiltonian(s, 0.0, x, a, p, g), best.value - 1e-9);
    }
  }
}

TEST(Minimizer, GridScanFindsClosedFormWhenOnGrid) {
  // theta = 0.5, M = 1, grid step 0.1: choose g differences that put the
  // vertex -(g_y - g_x) / (2 theta) on grid points.
  auto s = models::three_state_monotone();
  s.controlled.action_grid = 11;
  const std::vector<double> p{0.3, 0.3, 0.4};
  const std::vector<double> g{0.0, -0.3, -0.7};
  for (std::size_t x = 0; x < 3; ++x) {
    const auto closed = minimize_hamiltonian(s, 0.0, x, p, g);
    double best = INFINITY;
    Action arg;
    for (const auto& a : discretize_actions(s, x)) {
      const double h = pre_hamiltonian(s, 0.0, x, a, p, g);
      if (h < best) {
        best = h;
        arg = a;
      }
    }
    EXPECT_NEAR(best, closed.value, 1e-12);
    for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(arg.rates[y], closed.minimizer.rates[y], 1e-12);
  }
}

TEST(MinimizerLipschitz, BuiltinModelHasNoViolations) {
  const auto s = models::two_state_controlled();
  const auto r = minimizer_lipschitz_probe(s, 1000, 17);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.max_p_ratio, 0.0);  // zeta and c0 independent of p
  EXPECT_LE(r.max_g_ratio, r.g_bound);
}

TEST(MinimizerLipschitz, ClampExample) {
  const auto s = controlled_d2(0.0, 2.0, 0.5);
  const std::vector<double> p{0.5, 0.5};
  const auto a = minimize_hamiltonian(s, 0.0, 1, p, std::vector<double>{0.0, 1.0}).minimizer.rates;
  const auto b = minimize_hamiltonian(s, 0.0, 1, p, std::vector<double>{0.0, 0.5}).minimizer.rates;
  EXPECT_DOUBLE_EQ(std::abs(a[0] - b[0]), 0.5);
  EXPECT_LE(std::abs(a[0] - b[0]), (1.0 / 0.5) * 0.5);
}

TEST(MinimizerLipschitz, FiniteFamilyUnsupported) {
  EXPECT_THROW(minimizer_lipschitz_probe(models::finite_action_example(), 10, 1), Error);
}
