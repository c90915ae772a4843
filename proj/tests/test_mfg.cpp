#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mfgk/builtin_models.hpp"
#include "mfgk/mfg.hpp"

using namespace mfgk;

TEST(SolveMfg, DecoupledGameIsFixedAfterOneUpdate) {
  const auto s = models::decoupled(3);
  PhiloxStream rng(1);
  MfgOptions opt;
  opt.init = random_initial_flow(s, rng);
  const auto sol = solve_mfg(s, opt);
  ASSERT_TRUE(sol.converged);
  ASSERT_EQ(sol.residual_history.size(), 2u);
  EXPECT_EQ(sol.residual_history[1], 0.0);
}

TEST(SolveMfg, FixedPointCertificate) {
  const auto s = models::three_state_monotone();
  MfgOptions opt;
  opt.damping = 0.5;
  opt.tol = 1e-8;
  const auto sol = solve_mfg(s, opt);
  ASSERT_TRUE(sol.converged);
  EXPECT_LE(sol.residual, opt.tol);
  const auto image = apply_phi(s, sol.m).image;
  EXPECT_LE(flow_sup_distance(image, sol.m), 2.0 * opt.tol);
  EXPECT_TRUE(flow_lipschitz_check(sol.m, s.flow_lipschitz_bound()).pass);
}

TEST(SolveMfg, NonConvergenceReturnsBestIterate) {
  const auto s = models::two_state_controlled();
  MfgOptions opt;
  opt.max_iter = 3;
  opt.tol = 1e-14;
  const auto sol = solve_mfg(s, opt);
  EXPECT_FALSE(sol.converged);
  EXPECT_EQ(sol.iterations, 3u);
  EXPECT_EQ(sol.residual, *std::min_element(sol.residual_history.begin(), sol.residual_history.end()));
}

TEST(SolveMfg, RejectsBadDamping) {
  MfgOptions opt;
  opt.damping = 0.0;
  EXPECT_THROW(solve_mfg(models::two_state_controlled(), opt), Error);
}

TEST(TStar, RootOfDefiningEquation) {
  const auto r = compute_tstar(models::two_state_controlled());
  EXPECT_NEAR(r.lhs_at_T_star, 1.0, 1e-10);
  EXPECT_EQ(tstar_lhs(r, 2, 0.0), 0.0);
  double prev = 0.0;
  for (int i = 1; i <= 20; ++i) {
    const double v = tstar_lhs(r, 2, r.T_star * 0.1 * i);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(TStar, ConstantsOfBuiltinModel) {
  const auto r = compute_tstar(models::two_state_controlled());
  const double sd = std::sqrt(2.0);
  EXPECT_DOUBLE_EQ(r.C1, 2.0 * 4.0 + 2.0 * 2.0 * sd * 1.0);
  EXPECT_EQ(r.C2, 0.0);
  EXPECT_DOUBLE_EQ(r.C3, 2.0 * 4.0 / 0.5);
  EXPECT_DOUBLE_EQ(r.K2, 2.0);
  EXPECT_DOUBLE_EQ(r.C4, r.K2);
  // Regression value from the first computation.
  EXPECT_NEAR(r.T_star, 0.0087932662042130069, 1e-15);
}

TEST(TStar, LargerActionBoundShrinksHorizon) {
  auto s = models::two_state_controlled();
  const double base = compute_tstar(s).T_star;
  s.controlled.action_bound = 2.0;
  s.derived.reset();
  EXPECT_LT(compute_tstar(validate_model(s)).T_star, base);
}

TEST(TStar, DecoupledModelKeepsOnlyTheControlCostConstant) {
  // No measure dependence: K2 reduces to the action Lipschitz constant of
  // theta |a|^2 on [0, M]^d, which is 2 theta M sqrt(d).
  const auto r = compute_tstar(models::decoupled(2));
  EXPECT_DOUBLE_EQ(r.K2, 2.0 * 0.5 * 1.0 * std::sqrt(2.0));
  EXPECT_EQ(r.C2, 0.0);
  EXPECT_TRUE(std::isfinite(r.T_star));
}

TEST(TStar, FiniteFamilyUnsupported) {
  EXPECT_THROW(compute_tstar(models::finite_action_example()), Error);
}

TEST(Contraction, BelowTStarResidualsShrinkByTheBound) {
  const auto base = models::two_state_controlled();
  const auto r = compute_tstar(base);
  const double T = 0.8 * r.T_star;
  const auto s = models::two_state_controlled(T, 1000);
  const double bound = tstar_lhs(r, 2, T);
  ASSERT_LT(bound, 1.0);
  MfgOptions opt;
  opt.tol = 1e-6;
  opt.max_iter = 50;
  const auto sol = solve_mfg(s, opt);
  ASSERT_TRUE(sol.converged);
  for (std::size_t i = 1; i < sol.residual_history.size(); ++i)
    EXPECT_LE(sol.residual_history[i], bound * sol.residual_history[i - 1]);
}

TEST(Monotonicity, IdentityPasses) {
  const auto r = check_monotonicity(models::two_state_controlled(), 500, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.exact_pass);
  EXPECT_GT(r.min_c1_pairing, 0.0);
  EXPECT_EQ(r.samples, 500u);
}

TEST(Monotonicity, NegatedIdentityFails) {
  auto s = models::two_state_controlled();
  for (auto& v : s.running.table) v = -v;
  const auto r = check_monotonicity(s, 500, 1);
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.exact_pass);
  EXPECT_LT(r.min_c1_pairing, 0.0);
}

TEST(Monotonicity, RandomPsdTablePassesEigenCheck) {
  PhiloxStream rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    Eigen::MatrixXd B(d, d);
    for (Eigen::Index i = 0; i < B.rows(); ++i)
      for (Eigen::Index j = 0; j < B.cols(); ++j) B(i, j) = rng.next_uniform() - 0.5;
    const Eigen::MatrixXd A = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    auto s = models::three_state_monotone();
    s.d = d;
    s.m0 = {0.25, 0.25, 0.25, 0.25};
    s.running.offset.assign(d, 0.0);
    s.running.table.assign(A.data(), A.data() + d * d);
    s.terminal = {};
    s.derived.reset();
    s = validate_model(s);
    const auto r = check_monotonicity(s, 200, 5);
    EXPECT_TRUE(r.exact_pass);
    EXPECT_TRUE(r.pass);
    EXPECT_GT(r.c1_min_eigen, 0.0);
  }
}

TEST(Monotonicity, RateDependenceIsRejected) {
  EXPECT_THROW(check_monotonicity(models::two_state_rate_coupled(), 10, 1), Error);
}

TEST(Uniqueness, MonotoneModelAgreesAcrossStarts) {
  MfgOptions opt;
  opt.damping = 0.5;
  opt.tol = 1e-9;
  opt.max_iter = 500;
  const auto r = uniqueness_probe(models::three_state_monotone(), 3, 7, opt);
  EXPECT_EQ(r.starts, 3u);
  EXPECT_LE(r.max_flow_distance, 1e-5);
  EXPECT_LE(r.max_value_distance, 1e-5);
}

TEST(RandomInitialFlow, StaysInTheLipschitzClass) {
  const auto s = models::three_state_monotone();
  PhiloxStream rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto m = random_initial_flow(s, rng);
    EXPECT_NO_THROW(validate_flow(m, s.m0));
    EXPECT_TRUE(flow_lipschitz_check(m, s.flow_lipschitz_bound()).pass);
  }
}
