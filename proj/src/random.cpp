#include "sosioc/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace sosioc {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

double normal_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double truncated_normal_quantile(double u, double mean, double sigma, double lo, double hi) {
  double a = (lo - mean) / sigma;
  double b = (hi - mean) / sigma;
  // Work in the lower tail where the CDF keeps its relative precision.
  const bool flip = a > 0.0;
  if (flip) {
    std::swap(a, b);
    a = -a;
    b = -b;
  }
  const double fa = normal_cdf(a);
  const double fb = normal_cdf(b);
  double p = fa + u * (fb - fa);
  p = std::clamp(p, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
  double z = std::clamp(normal_quantile(p), a, b);
  if (flip) z = -z;
  return mean + sigma * z;
}

Eigen::VectorXd sample_truncated_normal(const TruncatedNormal& noise, std::uint64_t key,
                                        std::uint64_t base_counter) {
  Eigen::VectorXd w(noise.dim());
  for (Eigen::Index i = 0; i < noise.dim(); ++i) {
    const double u = counter_uniform(key, base_counter + static_cast<std::uint64_t>(i));
    w[i] = truncated_normal_quantile(u, noise.mean[i], noise.sigma[i], noise.support.lower[i],
                                     noise.support.upper[i]);
  }
  return w;
}

}  // namespace sosioc
