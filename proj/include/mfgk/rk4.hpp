#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mfgk {

/// Classical fixed-step fourth-order Runge-Kutta. The right-hand side is
/// called as rhs(t, y, dydt); a negative step integrates backward in time.
class Rk4 {
 public:
  explicit Rk4(std::size_t n) : k1_(n), k2_(n), k3_(n), k4_(n), tmp_(n) {}

  template <class Rhs>
  void step(Rhs&& rhs, double t, double h, std::vector<double>& y) {
    const std::size_t n = y.size();
    const double h2 = 0.5 * h;

    rhs(t, std::span<const double>(y), std::span<double>(k1_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h2 * k1_[i];

    rhs(t + h2, std::span<const double>(tmp_), std::span<double>(k2_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h2 * k2_[i];

    rhs(t + h2, std::span<const double>(tmp_), std::span<double>(k3_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * k3_[i];

    rhs(t + h, std::span<const double>(tmp_), std::span<double>(k4_));
    const double h6 = h / 6.0;
    for (std::size_t i = 0; i < n; ++i) y[i] += h6 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }

 private:
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace mfgk
