#include "sosioc/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sosioc {

namespace {

// P_n(x) and P_n'(x) by the three-term recurrence.
std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace

QuadratureRule gauss_legendre_1d(int count) {
  if (count < 1) throw std::invalid_argument("gauss_legendre_1d: count must be >= 1");
  QuadratureRule rule;
  rule.nodes.resize(1, count);
  rule.weights.resize(count);
  rule.domain = Box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));
  for (int i = 0; i < (count + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = legendre(count, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-16) break;
    }
    if (2 * i + 1 == count) x = 0.0;
    const double dp = legendre(count, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes(0, count - 1 - i) = x;
    rule.weights[count - 1 - i] = w;
    rule.nodes(0, i) = -x;
    rule.weights[i] = w;
  }
  return rule;
}

QuadratureRule tensor_rule(const Eigen::Ref<const Eigen::VectorXi>& per_axis_counts, const Box& box) {
  const Eigen::Index n = box.dim();
  if (per_axis_counts.size() != n) throw std::invalid_argument("tensor_rule: count/box dimension mismatch");
  std::vector<QuadratureRule> axes;
  Eigen::Index total = 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (per_axis_counts[i] < 1) throw std::invalid_argument("tensor_rule: counts must be >= 1");
    axes.push_back(gauss_legendre_1d(per_axis_counts[i]));
    total *= per_axis_counts[i];
  }
  const Eigen::VectorXd half = 0.5 * box.width();
  const Eigen::VectorXd mid = box.center();
  QuadratureRule rule;
  rule.domain = box;
  rule.nodes.resize(n, total);
  rule.weights.resize(total);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (Eigen::Index q = 0; q < total; ++q) {
    double w = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      rule.nodes(i, q) = mid[i] + half[i] * axes[i].nodes(0, idx[i]);
      w *= half[i] * axes[i].weights[idx[i]];
    }
    rule.weights[q] = w;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      if (++idx[i] < per_axis_counts[i]) break;
      idx[i] = 0;
    }
  }
  return rule;
}

TruncatedNormal::TruncatedNormal(Eigen::VectorXd m, Eigen::VectorXd s, Box supp)
    : mean(std::move(m)), sigma(std::move(s)), support(std::move(supp)) {
  if (mean.size() != sigma.size() || mean.size() != support.dim())
    throw std::invalid_argument("TruncatedNormal: dimension mismatch");
  if ((sigma.array() <= 0.0).any()) throw std::invalid_argument("TruncatedNormal: sigma must be positive");
}

Eigen::VectorXd TruncatedNormal::truncation_mass() const {
  Eigen::VectorXd mass(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) {
    const double a = (support.lower[i] - mean[i]) / (sigma[i] * std::numbers::sqrt2);
    const double b = (support.upper[i] - mean[i]) / (sigma[i] * std::numbers::sqrt2);
    mass[i] = 0.5 * (std::erfc(a) - std::erfc(b));
  }
  return mass;
}

NoiseRule truncated_normal_rule(const TruncatedNormal& noise, int count_per_axis) {
  if (count_per_axis < 2) throw std::invalid_argument("truncated_normal_rule: need at least 2 nodes per axis");
  const Eigen::Index n = noise.dim();
  Eigen::VectorXd lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lo[i] = std::max(noise.support.lower[i], noise.mean[i] - kEffectiveSupportSigmas * noise.sigma[i]);
    hi[i] = std::min(noise.support.upper[i], noise.mean[i] + kEffectiveSupportSigmas * noise.sigma[i]);
    if (!(lo[i] < hi[i]))
      throw std::domain_error("truncated_normal_rule: degenerate truncation (empty effective support)");
  }
  const QuadratureRule rule = tensor_rule(Eigen::VectorXi::Constant(n, count_per_axis), Box(lo, hi));
  NoiseRule out;
  out.points = rule.nodes;
  out.weights.resize(rule.size());
  const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(n)) /
                      noise.sigma.prod();
  for (Eigen::Index q = 0; q < rule.size(); ++q) {
    const Eigen::ArrayXd z = (rule.nodes.col(q) - noise.mean).array() / noise.sigma.array();
    out.weights[q] = rule.weights[q] * norm * std::exp(-0.5 * z.square().sum());
  }
  out.mass = out.weights.sum();
  if (!(out.mass >= 1e-300)) throw std::domain_error("truncated_normal_rule: degenerate truncation mass");
  out.weights /= out.mass;
  return out;
}

Eigen::VectorXd expectation(const VectorFunction& f, const NoiseRule& rule) {
  Eigen::VectorXd acc;
  for (Eigen::Index q = 0; q < rule.size(); ++q) {
    const Eigen::VectorXd v = f(rule.points.col(q));
    if (q == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc.noalias() += rule.weights[q] * v;
  }
  return acc;
}

Eigen::VectorXd truncated_normal_expectation(const VectorFunction& f, const TruncatedNormal& noise,
                                             int count_per_axis) {
  return expectation(f, truncated_normal_rule(noise, count_per_axis));
}

}  // namespace sosioc
