#pragma once

#include <functional>

#include <Eigen/Core>

#include "sosioc/box.hpp"

namespace sosioc {

/// Tensor quadrature rule; nodes are stored one point per column.
struct QuadratureRule {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd weights;
  Box domain;

  Eigen::Index size() const { return weights.size(); }

  template <typename F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (Eigen::Index q = 0; q < size(); ++q) acc += weights[q] * f(nodes.col(q));
    return acc;
  }
};

/// Gauss-Legendre rule with `count` nodes on [-1, 1], nodes ascending.
QuadratureRule gauss_legendre_1d(int count);

/// Tensor product of mapped Gauss-Legendre rules.
QuadratureRule tensor_rule(const Eigen::Ref<const Eigen::VectorXi>& per_axis_counts, const Box& box);

/// Gaussian with diagonal covariance truncated to `support`.
struct TruncatedNormal {
  Eigen::VectorXd mean;
  Eigen::VectorXd sigma;
  Box support;

  TruncatedNormal() = default;
  TruncatedNormal(Eigen::VectorXd mean, Eigen::VectorXd sigma, Box support);

  Eigen::Index dim() const { return mean.size(); }
  /// Per-axis probability mass of the untruncated law inside the support.
  Eigen::VectorXd truncation_mass() const;
};

inline constexpr int kDefaultNoiseNodes = 40;
inline constexpr double kEffectiveSupportSigmas = 8.0;

/// Quadrature points and normalized weights for expectations under a
/// truncated normal. Weights sum to one.
struct NoiseRule {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
  double mass = 0.0;  // quadrature estimate of the truncation mass

  Eigen::Index size() const { return weights.size(); }
};

/// Rule confined to support intersected with mean +- 8 sigma per axis.
/// Throws std::domain_error when the truncation mass falls below 1e-300.
NoiseRule truncated_normal_rule(const TruncatedNormal& noise, int count_per_axis = kDefaultNoiseNodes);

using VectorFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Componentwise E[f(w)] with w drawn from `noise`.
Eigen::VectorXd truncated_normal_expectation(const VectorFunction& f, const TruncatedNormal& noise,
                                             int count_per_axis = kDefaultNoiseNodes);

/// Expectation using a prebuilt rule.
Eigen::VectorXd expectation(const VectorFunction& f, const NoiseRule& rule);

}  // namespace sosioc
