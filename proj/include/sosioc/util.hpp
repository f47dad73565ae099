#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace sosioc {

/// Decimal rendering with 17 significant digits (round-trips any double).
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// 64-bit FNV-1a. Stable across platforms, used for file fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Neumaier-compensated accumulator for dense vectors.
template <typename Scalar>
class CompensatedSum {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit CompensatedSum(Eigen::Index n) : sum_(Vector::Zero(n)), comp_(Vector::Zero(n)) {}

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& v) {
    for (Eigen::Index i = 0; i < sum_.size(); ++i) {
      const Scalar x = v[i];
      const Scalar t = sum_[i] + x;
      if (std::abs(sum_[i]) >= std::abs(x))
        comp_[i] += (sum_[i] - t) + x;
      else
        comp_[i] += (x - t) + sum_[i];
      sum_[i] = t;
    }
  }

  Vector value() const { return sum_ + comp_; }

 private:
  Vector sum_;
  Vector comp_;
};

}  // namespace sosioc
