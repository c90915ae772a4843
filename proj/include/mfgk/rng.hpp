#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace mfgk {

/// Philox4x32-10 block function (Salmon et al., SC'11). Ten rounds, standard
/// multipliers and Weyl key increments; matches the Random123 reference.
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// Independent random stream keyed by a 64-bit seed and a 64-bit stream id
/// (by convention: high word = replication, low word = player). The 128-bit
/// counter is (block index, stream id), so streams never overlap.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint32_t stream_hi, std::uint32_t stream_lo) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_hi_(stream_hi),
        stream_lo_(stream_lo) {}

  explicit PhiloxStream(std::uint64_t seed) noexcept : PhiloxStream(seed, 0, 0) {}

  std::uint64_t next_u64() noexcept {
    if (pos_ >= 4) refill();
    const std::uint64_t lo = buffer_[pos_];
    const std::uint64_t hi = buffer_[pos_ + 1];
    pos_ += 2;
    return (hi << 32) | lo;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double next_uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_exponential(double rate) noexcept { return -std::log1p(-next_uniform()) / rate; }

  /// Uniform index in [0, n).
  std::size_t next_index(std::size_t n) noexcept {
    auto k = static_cast<std::size_t>(next_uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  double next_normal() noexcept {
    // Box-Muller; one output per call keeps the stream position simple.
    const double u1 = 1.0 - next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  void refill() noexcept {
    buffer_ = philox4x32_10({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                             stream_lo_, stream_hi_},
                            key_);
    ++block_;
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_hi_;
  std::uint32_t stream_lo_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
};

/// Uniform draw from the probability simplex (flat Dirichlet).
inline std::vector<double> random_simplex_point(PhiloxStream& rng, std::size_t d) {
  std::vector<double> p(d);
  double sum = 0.0;
  for (auto& v : p) {
    v = rng.next_exponential(1.0);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  // Push rounding residue into the largest component so the sum is 1 to ~1 ulp.
  double total = 0.0;
  std::size_t largest = 0;
  for (std::size_t i = 0; i < d; ++i) {
    total += p[i];
    if (p[i] > p[largest]) largest = i;
  }
  p[largest] += 1.0 - total;
  return p;
}

}  // namespace mfgk
