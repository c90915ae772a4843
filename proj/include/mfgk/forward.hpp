#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mfgk/error.hpp"
#include "mfgk/flow.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/model.hpp"
#include "mfgk/rk4.hpp"

namespace mfgk {

struct ForwardInput {
  const FeedbackPolicy& policy;
  const MeasureFlow& measure_arg;  // the m entering rates
};

inline constexpr double kNegativeMassTol = 1e-12;
inline constexpr double kMassLossTol = 1e-9;

/// Law of the controlled chain: the Kolmogorov forward equation
///   dpi_y/dt = sum_{x != y} pi_x lambda(x,y) - pi_y sum_{x != y} lambda(y,x)
/// integrated by RK4 from m0, with the node-k policy on [t_k, t_{k+1}) and the
/// measure argument interpolated at stage times. Each step clamps roundoff
/// negatives and renormalizes.
inline MeasureFlow solve_forward(const ModelSpec& spec, const ForwardInput& input) {
  detail::require_same_grid(spec, input.policy.grid);
  detail::require_same_grid(spec, input.measure_arg.grid);
  const TimeGrid grid = input.policy.grid;
  const std::size_t d = spec.d;
  MeasureFlow out{grid, d, std::vector<double>(grid.nodes() * d)};
  std::vector<double> pi(spec.m0);
  std::copy(pi.begin(), pi.end(), out.at(0).begin());

  std::vector<double> p(d);
  std::size_t interval = 0;
  auto rhs = [&](double t, std::span<const double> y, std::span<double> dydt) {
    interpolate_into(input.measure_arg, t, p);
    std::fill(dydt.begin(), dydt.end(), 0.0);
    for (std::size_t x = 0; x < d; ++x) {
      const Action& a = input.policy.at(interval, x);
      for (std::size_t z = 0; z < d; ++z) {
        if (z == x) continue;
        const double flux = y[x] * spec.rate(t, x, z, a, p);
        dydt[z] += flux;
        dydt[x] -= flux;
      }
    }
  };

  Rk4 rk4(d);
  double drift = 0.0;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    interval = k;
    rk4.step(rhs, grid.time(k), grid.dt(), pi);
    double sum = 0.0;
    for (auto& v : pi) {
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "forward integration produced a non-finite value");
      if (v < -kNegativeMassTol) throw Error(Errc::NegativeMass, "component " + std::to_string(v) + " below zero");
      v = std::max(v, 0.0);
      sum += v;
    }
    drift += std::abs(sum - 1.0);
    if (drift > kMassLossTol) throw Error(Errc::MassLoss, "cumulative renormalization exceeds tolerance");
    for (auto& v : pi) v /= sum;
    std::copy(pi.begin(), pi.end(), out.at(k + 1).begin());
  }
  return out;
}

}  // namespace mfgk
