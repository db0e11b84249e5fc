#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace tailbalance {

/// Seeded generator used everywhere randomness is needed.
///
/// Algorithm "tb-rng v1": std::mt19937_64 (whose output sequence is fixed by
/// the C++ standard) seeded with splitmix64(seed ^ splitmix64(stream)).
/// Uniform and normal variates are derived here rather than through the
/// <random> distributions, whose algorithms are implementation-defined.
/// Together this makes every generated byte reproducible across platforms
/// (normals up to libm's last-ulp behaviour for log/cos).
class Rng {
 public:
  static constexpr int kVersion = 1;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace tailbalance
