#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace sosioc {

/// Axis-aligned box [lower, upper] in R^n.
template <typename Scalar>
struct BoxT {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector lower;
  Vector upper;

  BoxT() = default;
  BoxT(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.size() < 1)
      throw std::invalid_argument("Box: bound vectors must share a nonzero size");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i]))
        throw std::invalid_argument("Box: lower[" + std::to_string(i) +
                                    "] must be strictly below upper");
    }
  }

  Eigen::Index dim() const { return lower.size(); }
  Vector width() const { return upper - lower; }
  Vector center() const { return Scalar(0.5) * (upper + lower); }
  Scalar volume() const { return width().prod(); }

  /// Membership with a per-axis slack of `rel_tol` times the axis width.
  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& p, Scalar rel_tol = Scalar(1e-12)) const {
    if (p.size() != dim()) return false;
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const Scalar slack = rel_tol * (upper[i] - lower[i]);
      if (!(p[i] >= lower[i] - slack && p[i] <= upper[i] + slack)) return false;
    }
    return true;
  }

  template <typename Derived>
  Vector clamp(const Eigen::MatrixBase<Derived>& p) const {
    return p.derived().cwiseMax(lower).cwiseMin(upper);
  }

  /// Affine map of each coordinate onto [-1, 1].
  template <typename Derived>
  Vector to_reference(const Eigen::MatrixBase<Derived>& p) const {
    return ((Scalar(2) * p.derived() - lower - upper).array() / (upper - lower).array()).matrix();
  }

  template <typename Derived>
  Vector from_reference(const Eigen::MatrixBase<Derived>& t) const {
    return (center().array() + Scalar(0.5) * width().array() * t.derived().array()).matrix();
  }

  /// Box grown by `rel` times the width on every side.
  BoxT expanded(Scalar rel) const {
    const Vector pad = rel * width();
    return BoxT(lower - pad, upper + pad);
  }

  /// Cartesian product `*this x other`.
  BoxT product(const BoxT& other) const {
    Vector lo(dim() + other.dim()), hi(dim() + other.dim());
    lo << lower, other.lower;
    hi << upper, other.upper;
    return BoxT(lo, hi);
  }

  BoxT slice(Eigen::Index start, Eigen::Index count) const {
    return BoxT(lower.segment(start, count), upper.segment(start, count));
  }
};

using Box = BoxT<double>;

}  // namespace sosioc
