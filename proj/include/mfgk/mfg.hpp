#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mfgk/error.hpp"
#include "mfgk/flow.hpp"
#include "mfgk/forward.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/model.hpp"
#include "mfgk/rng.hpp"

namespace mfgk {

struct MfgOptions {
  double damping = 1.0;  // delta in (0, 1]
  double tol = 1e-8;
  std::size_t max_iter = 200;
  std::optional<MeasureFlow> init;  // default: constant flow m(t) = m0
};

struct MfgSolution {
  MeasureFlow m;
  ValueFunction value;
  FeedbackPolicy policy;
  std::size_t iterations = 0;
  double residual = 0.0;  // sup_t |Phi(m)(t) - m(t)|
  bool converged = false;
  std::vector<double> residual_history;
};

/// One application of the best-response map: Phi(m) = Flow(X_{gamma_m, m}).
struct PhiImage {
  HjbSolution hjb;
  MeasureFlow image;
};

inline PhiImage apply_phi(const ModelSpec& spec, const MeasureFlow& m) {
  HjbSolution hjb = solve_hjb(spec, m);
  MeasureFlow image = solve_forward(spec, ForwardInput{hjb.policy, m});
  return {std::move(hjb), std::move(image)};
}

/// Damped Picard iteration m_{k+1} = (1 - delta) m_k + delta Phi(m_k).
///
/// Stops once the fixed-point residual sup_t |Phi(m_k) - m_k| is within tol
/// and returns m_k with its value function and policy. On hitting max_iter
/// the iterate with the smallest residual is returned with converged = false.
inline MfgSolution solve_mfg(const ModelSpec& spec, const MfgOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw Error(Errc::InvalidModel, "damping must lie in (0, 1]");
  const TimeGrid grid(spec);
  MeasureFlow m = opt.init ? *opt.init : constant_flow(grid, spec.m0);
  detail::require_same_grid(spec, m.grid);
  validate_flow(m, spec.m0);

  MfgSolution best;
  best.residual = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    PhiImage phi = apply_phi(spec, m);
    const double res = flow_sup_distance(phi.image, m);
    history.push_back(res);
    if (res < best.residual) {
      best.m = m;
      best.value = std::move(phi.hjb.value);
      best.policy = std::move(phi.hjb.policy);
      best.iterations = it;
      best.residual = res;
    }
    if (res <= opt.tol) {
      best.converged = true;
      break;
    }
    for (std::size_t i = 0; i < m.values.size(); ++i)
      m.values[i] = (1.0 - opt.damping) * m.values[i] + opt.damping * phi.image.values[i];
  }
  best.iterations = history.size();
  best.residual_history = std::move(history);
  return best;
}

// ---------------------------------------------------------------------------
// Small-time contraction horizon

struct TStarReport {
  double C1 = 0.0, C2 = 0.0, C3 = 0.0, C4 = 0.0, C5 = 0.0;  // C4, C5 at T_star
  double M_V = 0.0;                                         // at T_star
  double max_abs_running = 0.0;
  double max_abs_terminal = 0.0;
  double M = 0.0;
  double theta = 0.0;
  double M_zeta = 0.0;
  double K2 = 0.0;
  double K_zeta = 0.0;
  double K_a = 0.0;
  double T_star = 0.0;  // +inf when the left-hand side vanishes identically
  double lhs_at_T_star = 0.0;
};

namespace detail {

/// C4 and C5 depend on T through the value bound M_V(T) = T max|c| + max|psi|.
inline void fill_horizon_constants(TStarReport& r, std::size_t d_states, double T) {
  const double d = static_cast<double>(d_states);
  const double sd = std::sqrt(d);
  r.M_V = T * r.max_abs_running + r.max_abs_terminal;
  r.C4 = r.K2 + 2.0 * d * r.M_V * r.K_zeta + 2.0 * sd * r.M_V * r.K_a / r.theta + r.K2 * r.K_a / r.theta;
  r.C5 = 2.0 * r.M_V * sd / r.theta + r.K2 / r.theta + sd * (r.M_zeta + r.M);
}

}  // namespace detail

/// 2 T sqrt(d) e^{T C1} [C2 + C3 (K2 + T C4) e^{T C5}], with C4 and C5 taken at T.
inline double tstar_lhs(const TStarReport& r_in, std::size_t d, double T) {
  TStarReport r = r_in;
  detail::fill_horizon_constants(r, d, T);
  return 2.0 * T * std::sqrt(static_cast<double>(d)) * std::exp(T * r.C1) *
         (r.C2 + r.C3 * (r.K2 + T * r.C4) * std::exp(T * r.C5));
}

/// Constants of the contraction estimate for the ControlledRate family and
/// the root T* of tstar_lhs(T) = 1 by bisection to full double precision.
inline TStarReport compute_tstar(const ModelSpec& spec_in) {
  if (spec_in.family != Family::ControlledRate)
    throw Error(Errc::FamilyUnsupported, "T* is defined for the ControlledRate family");
  const ModelSpec spec = spec_in.derived ? spec_in : validate_model(spec_in);
  const DerivedConstants& dc = *spec.derived;
  const double d = static_cast<double>(spec.d);
  const double sd = std::sqrt(d);
  const double M = spec.controlled.action_bound;
  const double theta = spec.controlled.theta;

  TStarReport r;
  r.max_abs_running = dc.max_abs_running;
  r.max_abs_terminal = dc.max_abs_terminal;
  r.M = M;
  r.theta = theta;
  r.M_zeta = dc.M_zeta;
  r.K2 = dc.K2;
  r.K_zeta = dc.K_zeta;
  r.K_a = dc.K_a;
  r.C1 = 2.0 * M * d * d + 2.0 * d * sd * std::pow(M, d);
  r.C2 = 2.0 * d * sd * r.K_a / theta + 2.0 * d * d * r.K_zeta;
  r.C3 = 2.0 * d * d / theta;
  detail::fill_horizon_constants(r, spec.d, spec.T);

  // C4 = 0 for every T exactly when K2 = 0 and K_zeta M_V = K_a M_V = 0.
  if (r.C2 == 0.0 && r.K2 == 0.0 && r.C4 == 0.0) {
    r.T_star = std::numeric_limits<double>::infinity();
    r.lhs_at_T_star = 0.0;
    return r;
  }
  double lo = 0.0;
  double hi = 1.0;
  while (tstar_lhs(r, spec.d, hi) < 1.0) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (tstar_lhs(r, spec.d, mid) < 1.0 ? lo : hi) = mid;
  }
  const double f_lo = std::abs(tstar_lhs(r, spec.d, lo) - 1.0);
  const double f_hi = std::abs(tstar_lhs(r, spec.d, hi) - 1.0);
  r.T_star = f_lo <= f_hi ? lo : hi;
  detail::fill_horizon_constants(r, spec.d, r.T_star);
  r.lhs_at_T_star = tstar_lhs(r, spec.d, r.T_star);
  return r;
}

// ---------------------------------------------------------------------------
// Monotonicity

struct MonotonicityReport {
  double min_c1_pairing = 0.0;
  double min_psi_pairing = 0.0;
  bool pass = false;
  std::size_t samples = 0;
  // Smallest eigenvalue of the symmetric part of each table restricted to the
  // tangent space {v : sum v = 0}; decides monotonicity of affine tables.
  double c1_min_eigen = 0.0;
  double psi_min_eigen = 0.0;
  bool exact_pass = false;
};

namespace detail {

/// Orthonormal (Helmert) basis of {v in R^d : sum v = 0}, as d x (d-1).
inline Eigen::MatrixXd tangent_basis(std::size_t d) {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d - 1));
  for (std::size_t j = 1; j < d; ++j) {
    const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
    for (std::size_t i = 0; i < j; ++i) Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = 1.0 / norm;
    Q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j - 1)) = -static_cast<double>(j) / norm;
  }
  return Q;
}

inline double tangent_min_eigen(const std::vector<double>& table, std::size_t d) {
  if (table.empty()) return 0.0;
  Eigen::MatrixXd A(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table[i * d + j];
  const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  const Eigen::MatrixXd Q = tangent_basis(d);
  const Eigen::MatrixXd R = Q.transpose() * S * Q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Sampled Lasry-Lions pairings sum_x (phi(x,p) - phi(x,p'))(p_x - p'_x) for
/// the running and terminal costs, plus the exact eigenvalue decision.
inline MonotonicityReport check_monotonicity(const ModelSpec& spec, std::size_t n_pairs, std::uint64_t seed,
                                             double tol = 1e-12) {
  if (spec.rates_depend_on_measure())
    throw Error(Errc::RateDependsOnMeasure, "monotonicity uniqueness needs measure-independent rates");
  MonotonicityReport r;
  r.min_c1_pairing = std::numeric_limits<double>::infinity();
  r.min_psi_pairing = std::numeric_limits<double>::infinity();
  PhiloxStream rng(seed, 0, 3);
  const std::size_t d = spec.d;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto p = random_simplex_point(rng, d);
    const auto q = random_simplex_point(rng, d);
    double c1 = 0.0;
    double psi = 0.0;
    for (std::size_t x = 0; x < d; ++x) {
      c1 += (spec.running(d, x, p) - spec.running(d, x, q)) * (p[x] - q[x]);
      psi += (spec.terminal(d, x, p) - spec.terminal(d, x, q)) * (p[x] - q[x]);
    }
    r.min_c1_pairing = std::min(r.min_c1_pairing, c1);
    r.min_psi_pairing = std::min(r.min_psi_pairing, psi);
    ++r.samples;
  }
  r.pass = r.min_c1_pairing > 0.0 && r.min_psi_pairing >= -tol;
  r.c1_min_eigen = detail::tangent_min_eigen(spec.running.table, d);
  r.psi_min_eigen = detail::tangent_min_eigen(spec.terminal.table, d);
  r.exact_pass = r.c1_min_eigen > tol && r.psi_min_eigen >= -tol;
  return r;
}

// ---------------------------------------------------------------------------
// Uniqueness probe

/// A random flow in the Lipschitz class: straight-line travel from m0 to a
/// random target at speed at most K, then rest.
inline MeasureFlow random_initial_flow(const ModelSpec& spec, PhiloxStream& rng) {
  const TimeGrid grid(spec);
  const auto target = random_simplex_point(rng, spec.d);
  const double K = spec.flow_lipschitz_bound();
  const double dist = euclidean_distance(spec.m0, target);
  const double speed = K * (0.1 + 0.9 * rng.next_uniform());
  const double arrival = dist > 0.0 ? dist / speed : 0.0;
  MeasureFlow flow{grid, spec.d, std::vector<double>(grid.nodes() * spec.d)};
  for (std::size_t k = 0; k < grid.nodes(); ++k) {
    const double s = arrival > 0.0 ? std::min(1.0, grid.time(k) / arrival) : 1.0;
    for (std::size_t x = 0; x < spec.d; ++x) flow.at(k)[x] = (1.0 - s) * spec.m0[x] + s * target[x];
  }
  return flow;
}

struct UniquenessReport {
  std::size_t starts = 0;
  double max_flow_distance = 0.0;
  double max_value_distance = 0.0;  // sup over nodes and states
  std::vector<MfgSolution> solutions;
};

inline UniquenessReport uniqueness_probe(const ModelSpec& spec, std::size_t n_starts, std::uint64_t seed,
                                         MfgOptions opt = {}) {
  UniquenessReport r;
  PhiloxStream rng(seed, 0, 4);
  for (std::size_t i = 0; i < n_starts; ++i) {
    opt.init = random_initial_flow(spec, rng);
    MfgSolution sol = solve_mfg(spec, opt);
    if (!sol.converged)
      throw Error(Errc::NotConverged, "start " + std::to_string(i) + " stalled at residual " + std::to_string(sol.residual));
    r.solutions.push_back(std::move(sol));
  }
  r.starts = r.solutions.size();
  for (std::size_t i = 0; i < r.solutions.size(); ++i)
    for (std::size_t j = i + 1; j < r.solutions.size(); ++j) {
      r.max_flow_distance = std::max(r.max_flow_distance, flow_sup_distance(r.solutions[i].m, r.solutions[j].m));
      const auto& a = r.solutions[i].value.W;
      const auto& b = r.solutions[j].value.W;
      for (std::size_t k = 0; k < a.size(); ++k) r.max_value_distance = std::max(r.max_value_distance, std::abs(a[k] - b[k]));
    }
  return r;
}

}  // namespace mfgk
