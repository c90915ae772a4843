#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfgk/error.hpp"
#include "mfgk/io.hpp"
#include "mfgk/mfg.hpp"
#include "mfgk/model.hpp"
#include "mfgk/nplayer_exact.hpp"
#include "mfgk/nplayer_mc.hpp"
#include "mfgk/parallel.hpp"

namespace mfgk::cli {

using io::Json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNotConverged = 3;

/// Errors in the inputs (exit 2) as opposed to failures during compute (exit 1).
inline bool is_validation_error(Errc c) noexcept {
  switch (c) {
    case Errc::NotASimplex:
    case Errc::NonSimplexInitial:
    case Errc::NegativeRate:
    case Errc::DegenerateHorizon:
    case Errc::InvalidModel:
    case Errc::OutOfRange:
    case Errc::FamilyUnsupported:
    case Errc::RateDependsOnMeasure:
    case Errc::RateExceedsBound:
    case Errc::InvalidConfig:
    case Errc::StateSpaceTooLarge:
    case Errc::InsufficientData:
      return true;
    default:
      return false;
  }
}

/// Scenario document: {"model": {...}, "run": {...}}.
struct RunOptions {
  MfgOptions mfg{0.5, 1e-8, 500, std::nullopt};
  std::vector<std::size_t> N;
  std::size_t replications = 200;
  std::size_t checkpoints = 10;
  std::uint64_t seed = 1;
  std::size_t mono_pairs = 1000;
  std::size_t state_cap = CountStateIndex::kDefaultCap;
};

struct Scenario {
  ModelSpec model;
  RunOptions run;
};

inline Scenario scenario_from_json(const Json& doc) {
  io::detail::require_keys(doc, {"model", "run"}, "scenario");
  if (!doc.contains("model")) throw Error(Errc::InvalidConfig, "scenario needs a 'model' block");
  Scenario s;
  s.model = io::model_from_json(doc["model"]);
  const Json run = doc.value("run", Json::object());
  io::detail::require_keys(run, {"mfg", "N", "replications", "checkpoints", "seed", "mono_pairs", "state_cap"}, "run");
  if (run.contains("mfg")) {
    const Json& m = run["mfg"];
    io::detail::require_keys(m, {"damping", "tol", "max_iter"}, "run.mfg");
    s.run.mfg.damping = io::detail::get_or<double>(m, "damping", s.run.mfg.damping, "run.mfg");
    s.run.mfg.tol = io::detail::get_or<double>(m, "tol", s.run.mfg.tol, "run.mfg");
    s.run.mfg.max_iter = io::detail::get_or<std::size_t>(m, "max_iter", s.run.mfg.max_iter, "run.mfg");
    if (!(s.run.mfg.damping > 0.0 && s.run.mfg.damping <= 1.0))
      throw Error(Errc::InvalidConfig, "run.mfg.damping must lie in (0, 1]");
    if (!(s.run.mfg.tol > 0.0)) throw Error(Errc::InvalidConfig, "run.mfg.tol must be positive");
  }
  if (run.contains("N")) {
    if (!run["N"].is_array()) throw Error(Errc::InvalidConfig, "run.N must be an array");
    for (const auto& n : run["N"]) {
      if (!n.is_number_unsigned() || n.get<std::size_t>() < 1)
        throw Error(Errc::InvalidConfig, "run.N entries must be positive integers");
      s.run.N.push_back(n.get<std::size_t>());
    }
  }
  s.run.replications = io::detail::get_or<std::size_t>(run, "replications", s.run.replications, "run");
  s.run.checkpoints = io::detail::get_or<std::size_t>(run, "checkpoints", s.run.checkpoints, "run");
  s.run.seed = io::detail::get_or<std::uint64_t>(run, "seed", s.run.seed, "run");
  s.run.mono_pairs = io::detail::get_or<std::size_t>(run, "mono_pairs", s.run.mono_pairs, "run");
  s.run.state_cap = io::detail::get_or<std::size_t>(run, "state_cap", s.run.state_cap, "run");
  return s;
}

namespace detail {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool quiet = false;
  std::string solution;   // nash-gap, mc-converge, eval-cost
  std::string event_log;  // mc-converge
};

/// Artifacts are staged in memory and written only after every computation
/// succeeded (or converged = false), so failed runs leave no partial output.
class Artifacts {
 public:
  void add(const std::string& name, std::string content) { files_[name] = std::move(content); }
  /// A file outside the output directory, such as the event log.
  void add_external(const std::string& path, std::string content) { external_[path] = std::move(content); }

  void write(const std::string& dir) const {
    for (const auto& [path, content] : external_) io::write_text(path, content);
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files_) io::write_text(std::filesystem::path(dir) / name, content);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : files_) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, std::string> files_;
  std::map<std::string, std::string> external_;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json tstar_json(const TStarReport& r) {
  Json j;
  j["C1"] = r.C1;
  j["C2"] = r.C2;
  j["C3"] = r.C3;
  j["C4"] = r.C4;
  j["C5"] = r.C5;
  j["M_V"] = r.M_V;
  j["M_zeta"] = r.M_zeta;
  j["K2"] = r.K2;
  j["K_zeta"] = r.K_zeta;
  j["K_a"] = r.K_a;
  j["T_star"] = std::isfinite(r.T_star) ? Json(r.T_star) : Json(nullptr);
  j["lhs_at_T_star"] = r.lhs_at_T_star;
  return j;
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

/// The MFG policy and flow a command runs against: loaded from a solution
/// directory or solved on the spot.
struct Equilibrium {
  MeasureFlow m;
  FeedbackPolicy policy;
  bool converged = true;
  std::optional<MfgSolution> solved;
};

inline Equilibrium load_or_solve(const Scenario& sc, const Common& c, std::ostream& err) {
  Equilibrium e;
  if (!c.solution.empty()) {
    const std::filesystem::path dir(c.solution);
    e.m = io::read_flow_csv(sc.model, dir / "m.csv");
    e.policy = io::read_policy_csv(sc.model, dir / "policy.csv");
    return e;
  }
  if (!c.quiet) err << "solving the mean field game\n";
  MfgSolution sol = solve_mfg(sc.model, sc.run.mfg);
  e.m = sol.m;
  e.policy = sol.policy;
  e.converged = sol.converged;
  e.solved = std::move(sol);
  return e;
}

inline Json mfg_meta(const MfgSolution& sol, double certificate) {
  Json j;
  j["converged"] = sol.converged;
  j["iterations"] = sol.iterations;
  j["residual"] = sol.residual;
  j["residual_history"] = sol.residual_history;
  j["certificate_residual"] = certificate;
  return j;
}

inline Json base_meta(const std::string& command, const Scenario& sc, const Common& c) {
  Json j;
  j["command"] = command;
  j["timestamp"] = utc_timestamp();
  j["seed"] = c.seed.value_or(sc.run.seed);
  j["model"] = io::model_to_json(sc.model);
  return j;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Subcommands. Each returns the exit code and fills summary and artifacts.

inline int cmd_solve_mfg(const Scenario& sc, const Common& c, Json& summary, Artifacts& art, std::ostream& err) {
  if (!c.quiet) err << "solving the mean field game\n";
  const MfgSolution sol = solve_mfg(sc.model, sc.run.mfg);
  const double certificate = flow_sup_distance(apply_phi(sc.model, sol.m).image, sol.m);
  art.add("m.csv", io::flow_csv(sol.m));
  art.add("value.csv", io::value_csv(sol.value));
  art.add("policy.csv", io::policy_csv(sc.model, sol.policy));
  Json meta = base_meta("solve-mfg", sc, c);
  meta["mfg"] = mfg_meta(sol, certificate);
  if (sc.model.family == Family::ControlledRate) meta["tstar"] = tstar_json(compute_tstar(sc.model));
  art.add("meta.json", dump(meta));
  summary["converged"] = sol.converged;
  summary["iterations"] = sol.iterations;
  summary["residual"] = sol.residual;
  return sol.converged ? kExitOk : kExitNotConverged;
}

inline int cmd_nash_gap(const Scenario& sc, const Common& c, Json& summary, Artifacts& art, std::ostream& err) {
  std::vector<std::size_t> Ns = sc.run.N.empty() ? std::vector<std::size_t>{2, 4, 8, 16, 32, 64} : sc.run.N;
  for (std::size_t N : Ns)
    enumerate_count_states(sc.model.d, N, sc.run.state_cap);  // size check before any solve
  const Equilibrium eq = load_or_solve(sc, c, err);
  ExactOptions opt;
  opt.state_cap = sc.run.state_cap;
  opt.threads = resolve_threads(c.threads);
  if (!c.quiet) err << "computing exact Nash gaps\n";
  const NashGapTable table = nash_gap_table(sc.model, eq.policy, Ns, opt);

  io::CsvWriter csv({"N", "cost_sym", "cost_br", "epsilon", "epsilon_sqrtN"});
  Json rows = Json::array();
  for (const auto& r : table.rows) {
    const double scaled = r.epsilon * std::sqrt(static_cast<double>(r.N));
    csv.cell(r.N).cell(r.cost_symmetric).cell(r.cost_best_response).cell(r.epsilon).cell(scaled);
    csv.end_row();
    rows.push_back({{"N", r.N},
                    {"cost_sym", r.cost_symmetric},
                    {"cost_br", r.cost_best_response},
                    {"value_br", r.value_best_response},
                    {"epsilon", r.epsilon},
                    {"raw_epsilon", r.raw_epsilon}});
  }
  art.add("nash_gap.csv", csv.str());
  Json meta = base_meta("nash-gap", sc, c);
  meta["rows"] = rows;
  meta["slope"] = optional_number(table.slope);
  if (eq.solved) meta["mfg"] = mfg_meta(*eq.solved, eq.solved->residual);
  art.add("meta.json", dump(meta));
  summary["slope"] = optional_number(table.slope);
  summary["rows"] = rows;
  summary["converged"] = eq.converged;
  return eq.converged ? kExitOk : kExitNotConverged;
}

inline int cmd_mc_converge(const Scenario& sc, const Common& c, Json& summary, Artifacts& art, std::ostream& err) {
  const std::vector<std::size_t> Ns = sc.run.N.empty() ? std::vector<std::size_t>{16, 64, 256} : sc.run.N;
  if (sc.run.checkpoints == 0) throw Error(Errc::InvalidConfig, "run.checkpoints must be positive");
  const Equilibrium eq = load_or_solve(sc, c, err);
  const std::uint64_t seed = c.seed.value_or(sc.run.seed);
  const auto checkpoints = uniform_checkpoints(sc.model.T, sc.run.checkpoints);

  McOptions opt;
  opt.threads = resolve_threads(c.threads);
  std::ostringstream log;
  if (!c.event_log.empty()) {
    opt.event_sink = [&log](std::size_t rep, const PoissonEvent& ev) {
      Json j{{"rep", rep}, {"t", ev.time},         {"player", ev.player + 1}, {"target", ev.target + 1},
             {"height", ev.height}, {"x_jump", ev.x_jump}, {"y_jump", ev.y_jump}};
      log << j.dump() << '\n';
    };
  }

  std::vector<CoupledPathStats> runs;
  io::CsvWriter stats({"t", "N", "reps", "mean_mu_err", "ci_mu_err", "mean_x_err", "ci_x_err", "mismatch_prob"});
  for (std::size_t N : Ns) {
    if (!c.quiet) err << "simulating N = " << N << "\n";
    if (!c.event_log.empty()) log << Json{{"N", N}}.dump() << '\n';
    runs.push_back(simulate_coupled(sc.model, eq.policy, eq.m, N, sc.run.replications, seed, checkpoints, opt));
    for (const auto& cp : runs.back().checkpoints) {
      stats.cell(cp.t).cell(N).cell(sc.run.replications);
      stats.cell(cp.mu_error.mean()).cell(cp.mu_error.ci_half_width());
      stats.cell(cp.x_error.mean()).cell(cp.x_error.ci_half_width());
      stats.cell(cp.mismatch.mean());
      stats.end_row();
    }
  }
  art.add("stats.csv", stats.str());

  std::optional<ErrorRateFit> fit;
  if (runs.size() >= 3) fit = empirical_error_rate_fit(runs);
  Json rows = Json::array();
  if (fit) {
    io::CsvWriter rate({"N", "reps", "t_max", "max_mean_mu_err", "ci"});
    for (const auto& r : fit->rows) {
      rate.cell(r.N).cell(r.replications).cell(r.t_max).cell(r.max_mu_error).cell(r.ci);
      rate.end_row();
      rows.push_back({{"N", r.N}, {"t_max", r.t_max}, {"max_mean_mu_err", r.max_mu_error}, {"ci", r.ci}});
    }
    art.add("rate_fit.csv", rate.str());
  }
  if (!c.event_log.empty()) art.add_external(c.event_log, log.str());

  Json meta = base_meta("mc-converge", sc, c);
  meta["replications"] = sc.run.replications;
  meta["checkpoints"] = checkpoints;
  meta["slope"] = fit ? optional_number(fit->slope) : Json(nullptr);
  meta["rows"] = rows;
  if (eq.solved) meta["mfg"] = mfg_meta(*eq.solved, eq.solved->residual);
  art.add("meta.json", dump(meta));
  summary["slope"] = meta["slope"];
  summary["rows"] = rows;
  summary["converged"] = eq.converged;
  return eq.converged ? kExitOk : kExitNotConverged;
}

inline int cmd_check_mono(const Scenario& sc, const Common& c, Json& summary, Artifacts& art, std::ostream&) {
  const auto r = check_monotonicity(sc.model, sc.run.mono_pairs, c.seed.value_or(sc.run.seed));
  Json j{{"pass", r.pass},
         {"samples", r.samples},
         {"min_c1_pairing", r.min_c1_pairing},
         {"min_psi_pairing", r.min_psi_pairing},
         {"c1_min_eigen", r.c1_min_eigen},
         {"psi_min_eigen", r.psi_min_eigen},
         {"exact_pass", r.exact_pass}};
  Json meta = base_meta("check-mono", sc, c);
  meta["monotonicity"] = j;
  art.add("meta.json", dump(meta));
  summary["monotonicity"] = j;
  return kExitOk;
}

inline int cmd_tstar(const Scenario& sc, const Common& c, Json& summary, Artifacts& art, std::ostream&) {
  const Json j = tstar_json(compute_tstar(sc.model));
  Json meta = base_meta("tstar", sc, c);
  meta["tstar"] = j;
  art.add("meta.json", dump(meta));
  summary["tstar"] = j;
  return kExitOk;
}

inline int cmd_eval_cost(const Scenario& sc, const Common& c, Json& summary, Artifacts& art, std::ostream& err) {
  const std::vector<std::size_t> Ns = sc.run.N.empty() ? std::vector<std::size_t>{2, 4, 8} : sc.run.N;
  for (std::size_t N : Ns) enumerate_count_states(sc.model.d, N, sc.run.state_cap);
  const Equilibrium eq = load_or_solve(sc, c, err);
  const double mfg_cost = evaluate_cost(sc.model, eq.m, eq.policy);
  const std::uint64_t seed = c.seed.value_or(sc.run.seed);
  ExactOptions exact;
  exact.state_cap = sc.run.state_cap;
  exact.threads = resolve_threads(c.threads);
  McOptions mc;
  mc.threads = exact.threads;

  io::CsvWriter csv({"N", "cost_mfg", "cost_exact", "cost_mc", "ci_mc"});
  Json rows = Json::array();
  for (std::size_t N : Ns) {
    if (!c.quiet) err << "evaluating N = " << N << "\n";
    const double exact_cost = cost_under_symmetric_feedback(sc.model, eq.policy, N, exact);
    const CostEstimate est = sc.run.replications > 0
                                 ? mc_cost_estimate(sc.model, eq.policy, N, sc.run.replications, seed, mc)
                                 : CostEstimate{};
    csv.cell(N).cell(mfg_cost).cell(exact_cost).cell(est.mean).cell(est.ci);
    csv.end_row();
    rows.push_back({{"N", N}, {"cost_exact", exact_cost}, {"cost_mc", est.mean}, {"ci_mc", est.ci}});
  }
  art.add("cost.csv", csv.str());
  Json meta = base_meta("eval-cost", sc, c);
  meta["cost_mfg"] = mfg_cost;
  meta["rows"] = rows;
  if (eq.solved) meta["mfg"] = mfg_meta(*eq.solved, eq.solved->residual);
  art.add("meta.json", dump(meta));
  summary["cost_mfg"] = mfg_cost;
  summary["rows"] = rows;
  summary["converged"] = eq.converged;
  return eq.converged ? kExitOk : kExitNotConverged;
}

}  // namespace detail

/// Entry point of the `mfgk` tool. Prints one JSON object on `out`;
/// diagnostics go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite-state mean field games: solvers, N-player Nash gaps and coupling simulations", "mfgk"};
  app.require_subcommand(1, 1);
  detail::Common c;

  struct Sub {
    const char* name;
    const char* help;
    bool solution;
    bool event_log;
  };
  const Sub subs[] = {
      {"solve-mfg", "solve the mean field game by damped fixed-point iteration", false, false},
      {"nash-gap", "exact Nash gap of the MFG policy in the N-player game", true, false},
      {"mc-converge", "coupled Monte Carlo estimate of the empirical-measure error", true, true},
      {"check-mono", "check the monotonicity condition of the costs", false, false},
      {"tstar", "compute the contraction horizon", false, false},
      {"eval-cost", "evaluate the MFG policy: limit cost, exact and simulated N-player costs", true, false},
  };
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", c.config, "scenario JSON file")->required();
    sub->add_option("--out", c.out, "output directory for artifacts");
    sub->add_option("--seed", c.seed, "random seed (overrides run.seed)");
    sub->add_option("--threads", c.threads, "worker threads (default: MFG_KINETIC_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", c.quiet, "suppress progress messages");
    if (s.solution) sub->add_option("--solution", c.solution, "directory with m.csv and policy.csv from solve-mfg");
    if (s.event_log) sub->add_option("--event-log", c.event_log, "write every Poisson event as JSON lines");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    err << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Json summary;
  summary["command"] = command;
  try {
    const Scenario sc = scenario_from_json(io::read_json_file(c.config));
    if (!c.solution.empty() && !std::filesystem::is_directory(c.solution))
      throw Error(Errc::InvalidConfig, "solution directory " + c.solution + " does not exist");
    detail::Artifacts art;
    int code = kExitOk;
    if (command == "solve-mfg") code = detail::cmd_solve_mfg(sc, c, summary, art, err);
    if (command == "nash-gap") code = detail::cmd_nash_gap(sc, c, summary, art, err);
    if (command == "mc-converge") code = detail::cmd_mc_converge(sc, c, summary, art, err);
    if (command == "check-mono") code = detail::cmd_check_mono(sc, c, summary, art, err);
    if (command == "tstar") code = detail::cmd_tstar(sc, c, summary, art, err);
    if (command == "eval-cost") code = detail::cmd_eval_cost(sc, c, summary, art, err);
    art.write(c.out);
    summary["status"] = code == kExitOk ? "ok" : "not_converged";
    if (!c.out.empty()) {
      summary["out"] = c.out;
      summary["artifacts"] = art.names();
    }
    out << summary.dump() << "\n";
    if (code == kExitNotConverged) err << "warning: fixed-point iteration did not converge\n";
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    const bool validation = is_validation_error(e.code());
    summary["status"] = validation ? "invalid" : "failed";
    summary["error"] = to_string(e.code());
    out << summary.dump() << "\n";
    return validation ? kExitValidation : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    summary["status"] = "failed";
    out << summary.dump() << "\n";
    return kExitFailure;
  }
}

}  // namespace mfgk::cli
