#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/model.hpp"
#include "mfgk/simplex.hpp"

namespace mfgk {

/// Uniform grid t_k = k T / n_steps, k = 0..n_steps.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0)) throw Error(Errc::DegenerateHorizon, "grid horizon must be positive");
    if (n_steps == 0) throw Error(Errc::InvalidModel, "grid needs at least one step");
  }
  explicit TimeGrid(const ModelSpec& spec) : TimeGrid(spec.T, spec.n_steps) {}

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return n_steps_; }
  std::size_t nodes() const noexcept { return n_steps_ + 1; }
  double dt() const noexcept { return horizon_ / static_cast<double>(n_steps_); }
  double time(std::size_t k) const noexcept {
    return k == n_steps_ ? horizon_ : horizon_ * static_cast<double>(k) / static_cast<double>(n_steps_);
  }

  /// Index k of the interval [t_k, t_{k+1}) containing t (k = n_steps - 1 at T).
  std::size_t interval(double t) const noexcept {
    const double s = t / dt();
    if (!(s > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(s), n_steps_ - 1);
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_ = 1.0;
  std::size_t n_steps_ = 1;
};

/// Time-gridded path of measures, stored row-major (node, state). Piecewise
/// linear between nodes.
struct MeasureFlow {
  TimeGrid grid;
  std::size_t d = 0;
  std::vector<double> values;

  std::span<const double> at(std::size_t k) const { return {values.data() + k * d, d}; }
  std::span<double> at(std::size_t k) { return {values.data() + k * d, d}; }
  Simplex simplex(std::size_t k) const { return Simplex(std::vector<double>(at(k).begin(), at(k).end())); }
};

inline MeasureFlow constant_flow(const TimeGrid& grid, std::span<const double> p) {
  MeasureFlow flow{grid, p.size(), {}};
  flow.values.reserve(grid.nodes() * p.size());
  for (std::size_t k = 0; k < grid.nodes(); ++k) flow.values.insert(flow.values.end(), p.begin(), p.end());
  return flow;
}

/// Writes m(t) into `out` without validation; the hot-path form of
/// flow_interpolate.
inline void interpolate_into(const MeasureFlow& flow, double t, std::span<double> out) noexcept {
  const std::size_t k = flow.grid.interval(t);
  const double t0 = flow.grid.time(k);
  const double t1 = flow.grid.time(k + 1);
  const double s = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
  const auto a = flow.at(k);
  const auto b = flow.at(k + 1);
  if (s == 0.0) {
    std::copy(a.begin(), a.end(), out.begin());
  } else if (s == 1.0) {
    std::copy(b.begin(), b.end(), out.begin());
  } else {
    for (std::size_t i = 0; i < flow.d; ++i) out[i] = (1.0 - s) * a[i] + s * b[i];
  }
}

inline Simplex flow_interpolate(const MeasureFlow& flow, double t) {
  if (!(t >= 0.0) || t > flow.grid.horizon())
    throw Error(Errc::OutOfRange, "time " + std::to_string(t) + " outside [0, T]");
  std::vector<double> out(flow.d);
  interpolate_into(flow, t, out);
  return Simplex(std::move(out));
}

/// sup over nodes of the Euclidean distance between two flows on one grid.
inline double flow_sup_distance(const MeasureFlow& a, const MeasureFlow& b) {
  if (!(a.grid == b.grid) || a.d != b.d) throw Error(Errc::InvalidModel, "flows live on different grids");
  double best = 0.0;
  for (std::size_t k = 0; k < a.grid.nodes(); ++k) best = std::max(best, euclidean_distance(a.at(k), b.at(k)));
  return best;
}

struct LipschitzReport {
  double max_ratio = 0.0;
  double bound = 0.0;
  bool pass = true;
};

inline LipschitzReport flow_lipschitz_check(const MeasureFlow& flow, double K, double tol = 1e-9) {
  LipschitzReport r{0.0, K, true};
  for (std::size_t k = 0; k + 1 < flow.grid.nodes(); ++k) {
    const double dt = flow.grid.time(k + 1) - flow.grid.time(k);
    r.max_ratio = std::max(r.max_ratio, euclidean_distance(flow.at(k), flow.at(k + 1)) / dt);
  }
  r.pass = r.max_ratio <= K + tol;
  return r;
}

struct MassReport {
  double max_deviation = 0.0;
  bool pass = true;
};

inline MassReport mass_conservation_check(const MeasureFlow& flow, double tol = 1e-10) {
  MassReport r;
  for (std::size_t k = 0; k < flow.grid.nodes(); ++k) {
    double sum = 0.0;
    for (double v : flow.at(k)) sum += v;
    r.max_deviation = std::max(r.max_deviation, std::abs(sum - 1.0));
  }
  r.pass = r.max_deviation <= tol;
  return r;
}

/// Checks the MeasureFlow invariants: simplex-valued nodes starting at m0.
inline void validate_flow(const MeasureFlow& flow, std::span<const double> m0) {
  if (flow.values.size() != flow.grid.nodes() * flow.d) throw Error(Errc::InvalidModel, "flow has wrong size");
  for (std::size_t k = 0; k < flow.grid.nodes(); ++k)
    if (!is_simplex(flow.at(k), 1e-9)) throw Error(Errc::NotASimplex, "flow node " + std::to_string(k));
  if (euclidean_distance(flow.at(0), m0) > 1e-12) throw Error(Errc::InvalidModel, "flow does not start at m0");
}

}  // namespace mfgk
