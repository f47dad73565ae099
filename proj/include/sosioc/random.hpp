#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "sosioc/quadrature.hpp"

namespace sosioc {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed for stream `stream` of `seed` (per-trial, per-system, ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream ^ 0x5851f42d4c957f2dULL));
}

/// Uniform in (0, 1), a pure function of (key, counter).
inline double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = mix64(key ^ mix64(counter)) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Standard normal quantile.
double normal_quantile(double p);

/// Inverse-CDF draw from a scalar normal(mean, sigma) truncated to [lo, hi].
double truncated_normal_quantile(double u, double mean, double sigma, double lo, double hi);

/// Sequential view over the counter stream of one key.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t start = 0) : key_(key), counter_(start) {}

  double uniform() { return counter_uniform(key_, counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_quantile(uniform()); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Draw w ~ noise where component i uses counter_uniform(key, base + i).
Eigen::VectorXd sample_truncated_normal(const TruncatedNormal& noise, std::uint64_t key,
                                        std::uint64_t base_counter);

}  // namespace sosioc
