// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mfgk/builtin_models.hpp"
#include "mfgk/cli.hpp"
#include "mfgk/forward.hpp"
#include "mfgk/hamiltonian.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/mfg.hpp"
#include "mfgk/nplayer_exact.hpp"
#include "mfgk/nplayer_mc.hpp"
#include "oracles.hpp"

using namespace mfgk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds; 0 means none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

MfgOptions damped() {
  MfgOptions opt;
  opt.damping = 0.5;
  opt.tol = 1e-9;
  opt.max_iter = 500;
  return opt;
}

Outcome forward_closed_form() {
  const auto s = models::symmetric_two_state(1.0, 2000);
  const TimeGrid g(s);
  const auto pol = constant_policy(g, std::vector<Action>(2, Action{0, {}}));
  const auto flow = solve_forward(s, ForwardInput{pol, constant_flow(g, s.m0)});
  double err = 0.0;
  for (std::size_t k = 0; k < g.nodes(); ++k)
    err = std::max(err, std::abs(flow.at(k)[0] - 0.5 * (1.0 + std::exp(-2.0 * g.time(k)))));
  return {err <= 1e-8, "max error " + fmt("%.3e", err)};
}

Outcome hjb_oracle() {
  const auto ex = models::finite_action_example();
  const double w2 = solve_hjb(ex, constant_flow(TimeGrid(ex), ex.m0)).value.at(0)[1];
  const double closed_err = std::abs(w2 - (0.5 + 0.5 * std::exp(-1.0)));
  PhiloxStream rng(2024);
  double dp_err = 0.0;
  for (int i = 0; i < 5; ++i) {
    const ModelSpec s = i % 2 == 0 ? models::random_finite(rng, 2 + static_cast<std::size_t>(i % 3), 3)
                                   : models::random_controlled(rng, 2 + static_cast<std::size_t>(i % 2));
    const auto m = oracle::wavy_flow(s);
    const auto W = solve_hjb(s, m).value.W;
    const auto V = oracle::dp_oracle(s, m);
    for (std::size_t j = 0; j < V.size(); ++j) dp_err = std::max(dp_err, std::abs(V[j] - W[j]));
  }
  return {closed_err <= 1e-6 && dp_err <= 5e-3,
          "closed-form error " + fmt("%.3e", closed_err) + ", DP error " + fmt("%.3e", dp_err)};
}

Outcome f_lipschitz() {
  const auto s = models::three_state_monotone();
  const auto r = f_lipschitz_probe(s, oracle::wavy_flow(s), 1000, 99);
  return {r.samples == 1000 && r.violations == 0,
          std::to_string(r.violations) + " violations, max ratio " + fmt("%.4f", r.max_ratio) + " vs bound " +
              fmt("%.4f", r.bound)};
}

Outcome minimizer_lipschitz() {
  PhiloxStream rng(44);
  const std::vector<ModelSpec> specs{models::two_state_rate_coupled(), models::three_state_monotone(),
                                     models::random_controlled(rng, 3)};
  std::size_t violations = 0;
  double p_ratio = 0.0, g_ratio = 0.0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto r = minimizer_lipschitz_probe(specs[i], 1000, 17 + i);
    violations += r.violations;
    p_ratio = std::max(p_ratio, r.p_bound > 0.0 ? r.max_p_ratio / r.p_bound : r.max_p_ratio);
    g_ratio = std::max(g_ratio, r.max_g_ratio / r.g_bound);
  }
  return {violations == 0, std::to_string(violations) + " violations, max observed/bound " + fmt("%.3f", p_ratio) +
                               " (measure), " + fmt("%.3f", g_ratio) + " (value)"};
}

Outcome contraction() {
  const auto r = compute_tstar(models::two_state_controlled());
  const double T = 0.8 * r.T_star;
  const double bound = tstar_lhs(r, 2, T);
  MfgOptions opt;
  opt.tol = 1e-6;
  opt.max_iter = 50;
  const auto sol = solve_mfg(models::two_state_controlled(T, 1000), opt);
  double worst = 0.0;
  for (std::size_t i = 1; i < sol.residual_history.size(); ++i)
    worst = std::max(worst, sol.residual_history[i] / sol.residual_history[i - 1]);
  return {bound < 1.0 && sol.converged && worst <= bound,
          "T* " + fmt("%.6g", r.T_star) + ", bound " + fmt("%.4f", bound) + ", worst ratio " + fmt("%.3e", worst) + ", " +
              std::to_string(sol.iterations) + " iterations"};
}

Outcome monotone_uniqueness() {
  const auto r = uniqueness_probe(models::three_state_monotone(), 5, 7, damped());
  return {r.starts == 5 && r.max_flow_distance <= 1e-5 && r.max_value_distance <= 1e-5,
          "flow distance " + fmt("%.3e", r.max_flow_distance) + ", value distance " + fmt("%.3e", r.max_value_distance)};
}

Outcome nash_gap_rate() {
  const auto s = models::two_state_controlled();
  const auto sol = solve_mfg(s, damped());
  const auto table = nash_gap_table(s, sol.policy, {2, 4, 8, 16, 32, 64});
  bool positive = true;
  double lo = INFINITY, hi = 0.0;
  std::ostringstream eps;
  for (const auto& row : table.rows) {
    positive = positive && row.epsilon > 0.0;
    const double scaled = row.epsilon * std::sqrt(static_cast<double>(row.N));
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
    eps << " " << fmt("%.3e", row.epsilon);
  }
  const bool slope_ok = table.slope && *table.slope <= -0.4;
  return {sol.converged && positive && slope_ok && hi <= 5.0 * lo,
          "slope " + (table.slope ? fmt("%.3f", *table.slope) : std::string("n/a")) + ", eps*sqrt(N) ratio " +
              fmt("%.2f", hi / lo) + ", eps" + eps.str()};
}

Outcome exact_vs_mc() {
  const std::vector<ModelSpec> specs{models::two_state_controlled(), models::three_state_monotone(),
                                     models::two_state_rate_coupled()};
  bool ok = true;
  std::ostringstream out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto sol = solve_mfg(specs[i], damped());
    const double exact = cost_under_symmetric_feedback(specs[i], sol.policy, 4);
    const auto est = mc_cost_estimate(specs[i], sol.policy, 4, 10000, 100 + i);
    const double z = std::abs(est.mean - exact) / est.std_error;
    ok = ok && sol.converged && z <= 3.0;
    out << (i ? ", " : "") << "|z| " << fmt("%.2f", z);
  }
  return {ok, out.str()};
}

double coupling_slope(const ModelSpec& s, std::uint64_t seed) {
  const auto sol = solve_mfg(s, damped());
  const auto cps = uniform_checkpoints(s.T, 10);
  std::vector<CoupledPathStats> runs;
  for (std::size_t N : {16u, 64u, 256u}) runs.push_back(simulate_coupled(s, sol.policy, sol.m, N, 200, seed, cps));
  return empirical_error_rate_fit(runs).slope.value_or(NAN);
}

Outcome coupling_rate() {
  const double mono = coupling_slope(models::three_state_monotone(), 5);
  const double control = coupling_slope(models::decoupled(2), 6);
  return {mono <= -0.4 && control >= -0.6 && control <= -0.4,
          "monotone slope " + fmt("%.3f", mono) + ", decoupled slope " + fmt("%.3f", control)};
}

Outcome coupling_identity() {
  const auto s = models::two_state_controlled();
  const auto sol = solve_mfg(s, damped());
  const auto stats = simulate_coupled(s, sol.policy, sol.m, 16, 1000, 9, uniform_checkpoints(s.T, 10));
  return {stats.mismatch_paths == 0, std::to_string(stats.mismatch_paths) + " mismatched paths of 1000"};
}

Outcome count_compression() {
  double worst = 0.0;
  const std::vector<ModelSpec> specs{models::two_state_controlled(1.0, 200), models::three_state_monotone(1.0, 200)};
  for (const auto& s : specs) {
    const auto policy = solve_mfg(s, damped()).policy;
    for (std::size_t N : {2u, 3u}) {
      const oracle::ProductChain chain(s, policy, N);
      const double expected = chain.cost([&](std::size_t k, std::size_t x1, std::span<const int>) -> const Action& {
        return policy.at(k, x1);
      });
      worst = std::max(worst, std::abs(cost_under_symmetric_feedback(s, policy, N) - expected));
    }
  }
  return {worst <= 1e-9, "max difference " + fmt("%.3e", worst)};
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mfgk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "mfgk_acceptance";
  fs::remove_all(root);
  const std::string cfg = std::string(MFGK_CONFIG_DIR) + "/two_state.json";
  bool ok = true;
  std::size_t compared = 0;
  for (const char* cmd : {"solve-mfg", "nash-gap", "mc-converge", "eval-cost"}) {
    const std::vector<std::pair<std::string, std::string>> runs{{"a", "1"}, {"b", "1"}, {"c", "2"}, {"d", "4"}};
    for (const auto& [tag, threads] : runs)
      ok = ok && invoke({cmd, "--config", cfg, "--out", (root / cmd / tag).string(), "--threads", threads, "--quiet"}) ==
                     cli::kExitOk;
    if (!ok) break;
    for (const auto& entry : fs::directory_iterator(root / cmd / "a")) {
      if (entry.path().extension() != ".csv") continue;
      const std::string first = io::read_text(entry.path());
      for (const auto& [tag, threads] : runs) ok = ok && io::read_text(root / cmd / tag / entry.path().filename()) == first;
      ++compared;
    }
  }
  fs::remove_all(root);
  return {ok && compared > 0, std::to_string(compared) + " CSV files compared across 4 runs each"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "forward-flow closed form", 1.0, forward_closed_form},
      {2, "HJB oracle equivalence", 10.0, hjb_oracle},
      {3, "F-Lipschitz property", 0.0, f_lipschitz},
      {4, "minimizer Lipschitz constants", 0.0, minimizer_lipschitz},
      {5, "contraction below T*", 30.0, contraction},
      {6, "monotone uniqueness", 0.0, monotone_uniqueness},
      {7, "exact Nash gap rate", 600.0, nash_gap_rate},
      {8, "exact vs Monte Carlo cost", 120.0, exact_vs_mc},
      {9, "coupling rate", 600.0, coupling_rate},
      {10, "coupling identity", 0.0, coupling_identity},
      {11, "count-compression exactness", 0.0, count_compression},
      {12, "reproducibility", 0.0, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit > 0.0 && secs >= c.time_limit) {
      o.pass = false;
      o.detail += ", over the time limit of " + fmt("%.0f", c.time_limit) + " s";
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d %-30s %s  %s  [%.2f s]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
