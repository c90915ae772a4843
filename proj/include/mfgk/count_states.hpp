#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mfgk/error.hpp"

namespace mfgk {

/// Binomial coefficient, saturating at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) noexcept {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    // r * num / i is exact at every step; guard the product.
    if (r > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
    r = r * num / i;
  }
  return r;
}

/// Occupancy vectors n in N^d with sum n = total (the other N - 1 players),
/// joined with the tagged player's state x1.
///
/// A count vector is encoded by the strictly increasing partial sums
/// c_j = n_0 + ... + n_j + j, j = 0..d-2, a (d-1)-subset of
/// {0, ..., total + d - 2}; its rank is the colexicographic subset rank
/// sum_j C(c_j, j + 1). Joint states are ordered by count rank, then x1:
/// joint = rank * d + x1, so the d joint states sharing a count vector are
/// contiguous.
class CountStateIndex {
 public:
  static constexpr std::size_t kDefaultCap = 2'000'000;

  CountStateIndex(std::size_t d, std::size_t total, std::size_t cap = kDefaultCap) : d_(d), total_(total) {
    if (d < 2) throw Error(Errc::InvalidModel, "count states need d >= 2");
    const std::uint64_t count = binomial(total + d - 1, d - 1);
    if (count == std::numeric_limits<std::uint64_t>::max() || count > cap / d)
      throw Error(Errc::StateSpaceTooLarge, "joint state space of " + std::to_string(d) + " x C(" +
                                                std::to_string(total + d - 1) + "," + std::to_string(d - 1) +
                                                ") exceeds cap " + std::to_string(cap));
    size_ = static_cast<std::size_t>(count);

    binom_.assign((total + d) * d, 0);
    for (std::size_t n = 0; n < total + d; ++n)
      for (std::size_t k = 0; k < d; ++k) binom_[n * d + k] = static_cast<std::size_t>(binomial(n, k));

    counts_.assign(size_ * d, 0);
    std::vector<int> n(d, 0);
    fill(n, 0, static_cast<int>(total));

    moves_.assign(size_ * d * d, -1);
    std::vector<int> m(d);
    for (std::size_t r = 0; r < size_; ++r) {
      const auto cur = counts(r);
      for (std::size_t z = 0; z < d; ++z) {
        if (cur[z] == 0) continue;
        for (std::size_t y = 0; y < d; ++y) {
          if (y == z) continue;
          m.assign(cur.begin(), cur.end());
          --m[z];
          ++m[y];
          moves_[(r * d + z) * d + y] = static_cast<std::ptrdiff_t>(rank(m));
        }
      }
    }
  }

  std::size_t d() const noexcept { return d_; }
  std::size_t total() const noexcept { return total_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t joint_size() const noexcept { return size_ * d_; }

  std::span<const int> counts(std::size_t rank) const noexcept { return {counts_.data() + rank * d_, d_}; }

  std::size_t rank(std::span<const int> n) const noexcept {
    std::size_t r = 0;
    std::size_t partial = 0;
    for (std::size_t j = 0; j + 1 < d_; ++j) {
      partial += static_cast<std::size_t>(n[j]);
      r += binom_[(partial + j) * d_ + (j + 1)];
    }
    return r;
  }

  /// Rank of n - e_z + e_y, or -1 when n_z = 0.
  std::ptrdiff_t move(std::size_t rank, std::size_t z, std::size_t y) const noexcept {
    return moves_[(rank * d_ + z) * d_ + y];
  }

  std::size_t joint(std::size_t rank, std::size_t x1) const noexcept { return rank * d_ + x1; }

 private:
  void fill(std::vector<int>& n, std::size_t pos, int remaining) {
    if (pos + 1 == d_) {
      n[pos] = remaining;
      const std::size_t r = rank(n);
      std::copy(n.begin(), n.end(), counts_.begin() + static_cast<std::ptrdiff_t>(r * d_));
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      n[pos] = v;
      fill(n, pos + 1, remaining - v);
    }
  }

  std::size_t d_;
  std::size_t total_;
  std::size_t size_ = 0;
  std::vector<std::size_t> binom_;
  std::vector<int> counts_;
  std::vector<std::ptrdiff_t> moves_;
};

inline CountStateIndex enumerate_count_states(std::size_t d, std::size_t N,
                                              std::size_t cap = CountStateIndex::kDefaultCap) {
  if (N < 2) throw Error(Errc::InvalidModel, "the N-player game needs N >= 2");
  return CountStateIndex(d, N - 1, cap);
}

}  // namespace mfgk
