#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfgk/error.hpp"

namespace mfgk {

inline constexpr double kSimplexTol = 1e-12;

/// A probability vector on d states. Validated at construction: nonnegative
/// components summing to one within kSimplexTol.
class Simplex {
 public:
  explicit Simplex(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw Error(Errc::NotASimplex, "empty probability vector");
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0)) throw Error(Errc::NotASimplex, "negative or non-finite component");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTol)
      throw Error(Errc::NotASimplex, "components sum to " + std::to_string(sum));
  }

  static Simplex vertex(std::size_t d, std::size_t k) {
    std::vector<double> p(d, 0.0);
    p.at(k) = 1.0;
    return Simplex(std::move(p));
  }

  static Simplex uniform(std::size_t d) { return Simplex(std::vector<double>(d, 1.0 / static_cast<double>(d))); }

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const noexcept { return p_[i]; }
  std::span<const double> values() const noexcept { return p_; }
  operator std::span<const double>() const noexcept { return p_; }  // NOLINT(google-explicit-constructor)
  auto begin() const noexcept { return p_.begin(); }
  auto end() const noexcept { return p_.end(); }

  friend bool operator==(const Simplex&, const Simplex&) = default;

 private:
  std::vector<double> p_;
};

inline bool is_simplex(std::span<const double> p, double tol = kSimplexTol) noexcept {
  if (p.empty()) return false;
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

inline double euclidean_distance(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = p[i] - q[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline double simplex_distance(const Simplex& p, const Simplex& q) {
  if (p.size() != q.size()) throw Error(Errc::InvalidModel, "simplex dimension mismatch");
  return euclidean_distance(p.values(), q.values());
}

}  // namespace mfgk
