#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace fedclust {

/// One splitmix64 step. Used as the mixing function for seed derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic sub-seed for a named purpose. Every randomized step of the
/// simulator (init, sampling, per-client training, splits, ...) draws from its
/// own derived stream, so streams never interleave across features.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t w : words) h = splitmix64(h ^ w);
  return h;
}

// Purpose tags for derive_seed. Part of the reproducibility contract:
// changing a tag changes every stream derived from it.
namespace seed_purpose {
inline constexpr std::uint64_t kServerInit = 0x01;
inline constexpr std::uint64_t kSampling = 0x02;
inline constexpr std::uint64_t kClientTrain = 0x03;
inline constexpr std::uint64_t kNewcomerTrain = 0x04;
inline constexpr std::uint64_t kNewcomerFinetune = 0x05;
inline constexpr std::uint64_t kHoldout = 0x06;
inline constexpr std::uint64_t kDataset = 0x07;
inline constexpr std::uint64_t kPartition = 0x08;
inline constexpr std::uint64_t kTestSplit = 0x09;
}  // namespace seed_purpose

/// mt19937_64 with distributions implemented directly on the raw 64-bit
/// stream. The <random> distribution classes are not pinned by the standard,
/// so results would differ across standard libraries; these are.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound), unbiased (mask + rejection).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
    const std::uint64_t mask = std::bit_ceil(bound) - 1;
    std::uint64_t r;
    do {
      r = next_u64() & mask;
    } while (r >= bound);
    return r;
  }

  /// Standard normal via Box-Muller (cosine branch).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 boosted through
  /// Gamma(shape+1) * U^(1/shape).
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = 1.0 - uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  /// k distinct values from [0, n), returned in ascending order.
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("Rng::sample_without_replacement: k out of range");
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

/// Ceil of fraction*count with a snap window: products that land within 1e-9
/// of an integer are treated as that integer, so 0.07*100 stays 7, not 8.
inline int ceil_fraction(double fraction, int count) {
  const double t = fraction * static_cast<double>(count);
  const double nearest = std::round(t);
  if (std::abs(t - nearest) < 1e-9 * std::max(1.0, std::abs(t))) {
    return static_cast<int>(nearest);
  }
  return static_cast<int>(std::ceil(t));
}

/// Floor with the same snap window as ceil_fraction.
inline int floor_fraction(double fraction, int count) {
  const double t = fraction * static_cast<double>(count);
  const double nearest = std::round(t);
  if (std::abs(t - nearest) < 1e-9 * std::max(1.0, std::abs(t))) {
    return static_cast<int>(nearest);
  }
  return static_cast<int>(std::floor(t));
}

}  // namespace fedclust
