#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace alphamaml {

/// Seeded generator with self-contained distributions. mt19937_64 output
/// is pinned by the standard and the mappings below avoid std::
/// distributions, whose streams differ across standard libraries — the
/// same seed must reproduce the same episodes on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    uint64_t v;
    do {
      v = engine_() & mask;
    } while (v >= n);
    return v;
  }

  /// Standard normal (Box-Muller, cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Normal(0, std^2) resampled until within 2 standard deviations.
  double truncated_normal(double std_dev) {
    double z;
    do {
      z = normal();
    } while (std::abs(z) > 2.0);
    return z * std_dev;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from [0, n), order randomized.
  std::vector<long> sample_without_replacement(long n, long k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline std::vector<long> Rng::sample_without_replacement(long n, long k) {
  std::vector<long> pool(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  std::vector<long> out;
  out.reserve(static_cast<size_t>(k));
  for (long i = 0; i < k; ++i) {
    size_t j = static_cast<size_t>(below(static_cast<uint64_t>(n - i)));
    out.push_back(pool[j]);
    pool[j] = pool[static_cast<size_t>(n - 1 - i)];
  }
  return out;
}

}  // namespace alphamaml
