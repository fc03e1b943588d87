#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace wdist {

/// Philox4x32-10 (Salmon et al., SC'11). A pure function of (key, counter):
/// every variate can be addressed directly, so draws do not depend on the
/// order in which workers or replicates are scheduled.
class Philox4x32 {
 public:
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  counter_type operator()(counter_type ctr) const {
    key_type key = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = one_round(ctr, key);
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static counter_type one_round(const counter_type& c, const key_type& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }

  key_type key_;
};

/// Addressable stream of variates for one (replicate, block, row) cell.
/// Successive draws advance a sub-counter held in the last counter word.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c)
      : gen_(seed), base_{a, b, c, 0} {}

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    refill_if_needed(2);
    const std::uint64_t hi = buf_[pos_++];
    const std::uint64_t lo = buf_[pos_++];
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is kept.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Integer uniform on [0, bound).
  std::uint64_t below(std::uint64_t bound) { return static_cast<std::uint64_t>(uniform() * double(bound)) % bound; }

 private:
  void refill_if_needed(int words) {
    if (pos_ + words <= 4) return;
    auto ctr = base_;
    ctr[3] = next_++;
    buf_ = gen_(ctr);
    pos_ = 0;
  }

  Philox4x32 gen_;
  Philox4x32::counter_type base_;
  Philox4x32::counter_type buf_{};
  int pos_ = 4;
  std::uint32_t next_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer over (seed, tag): independent seeds for derived streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic pseudorandom permutation of 0..n-1 (Fisher-Yates).
inline std::vector<std::int64_t> seeded_permutation(std::int64_t n, std::uint64_t seed, std::uint32_t a,
                                                    std::uint32_t b) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), std::int64_t{0});
  CounterStream stream(seed, a, b, 0xA5A5A5A5u);
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(stream.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

}  // namespace wdist
