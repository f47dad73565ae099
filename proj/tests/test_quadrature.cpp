#include <gtest/gtest.h>

#include <cmath>

#include "sosioc/quadrature.hpp"
#include "sosioc/random.hpp"

using namespace sosioc;

TEST(GaussLegendre, ClassicalRules) {
  const QuadratureRule r1 = gauss_legendre_1d(1);
  EXPECT_NEAR(r1.nodes(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(r1.weights[0], 2.0, 1e-15);

  const QuadratureRule r2 = gauss_legendre_1d(2);
  EXPECT_NEAR(r2.nodes(0, 0), -1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(r2.nodes(0, 1), 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(r2.weights[0], 1.0, 1e-15);
  EXPECT_NEAR(r2.weights[1], 1.0, 1e-15);
  EXPECT_NEAR(r2.integrate([](const auto& x) { return x[0] * x[0]; }), 2.0 / 3.0, 1e-14);
}

TEST(GaussLegendre, ExactToDegree2nMinus1) {
  for (int count : {3, 7, 20, 40}) {
    const QuadratureRule r = gauss_legendre_1d(count);
    EXPECT_NEAR(r.weights.sum(), 2.0, 1e-13);
    for (int k = 0; k <= 2 * count - 1; ++k) {
      const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
      EXPECT_NEAR(r.integrate([k](const auto& x) { return std::pow(x[0], k); }), exact, 1e-13) << count << " " << k;
    }
  }
}

TEST(TensorRule, MappedBoxes) {
  const QuadratureRule one = tensor_rule(Eigen::Vector2i(1, 1), Box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 3)));
  ASSERT_EQ(one.size(), 1);
  EXPECT_NEAR(one.nodes(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(one.nodes(1, 0), 1.5, 1e-15);
  EXPECT_NEAR(one.weights[0], 6.0, 1e-14);

  const Box box(Eigen::Vector3d(-1, 2, 0), Eigen::Vector3d(4, 3, 0.5));
  const QuadratureRule r = tensor_rule(Eigen::Vector3i(2, 3, 4), box);
  EXPECT_NEAR(r.integrate([](const auto&) { return 1.0; }), box.volume(), 1e-12 * box.volume());

  const QuadratureRule sq = tensor_rule(Eigen::Vector2i(3, 3), Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)));
  EXPECT_NEAR(sq.integrate([](const auto& x) { return x[0] * x[0] * x[1] * x[1]; }), 4.0 / 9.0, 1e-14);
}

TEST(TruncatedNormalExpectation, SymmetryAndConstants) {
  const TruncatedNormal noise(Eigen::Vector2d::Zero(), Eigen::Vector2d(0.3, 0.7),
                              Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)));
  const Eigen::VectorXd m = truncated_normal_expectation([](const Eigen::VectorXd& w) { return w; }, noise);
  EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd c =
      truncated_normal_expectation([](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 3.25); }, noise);
  EXPECT_NEAR(c[0], 3.25, 1e-14);
}

TEST(TruncatedNormalExpectation, NarrowGaussianSecondMoment) {
  // Truncation at 100 sigma is negligible, so E[w^2] = sigma^2.
  const TruncatedNormal noise(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.01),
                              Box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)));
  const Eigen::VectorXd m2 =
      truncated_normal_expectation([](const Eigen::VectorXd& w) { return Eigen::VectorXd::Constant(1, w[0] * w[0]); },
                                   noise, 40);
  EXPECT_NEAR(m2[0], 1e-4, 1e-12);
}

TEST(TruncatedNormalExpectation, TruncatedVarianceOracle) {
  // Standard normal truncated to [-1, 1]: Var = 1 - 2 phi(1) / (2 Phi(1) - 1).
  const TruncatedNormal noise(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1),
                              Box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)));
  const double phi1 = std::exp(-0.5) / std::sqrt(2.0 * M_PI);
  const double mass = std::erf(1.0 / std::sqrt(2.0));
  const double var = 1.0 - 2.0 * phi1 / mass;
  const Eigen::VectorXd m2 =
      truncated_normal_expectation([](const Eigen::VectorXd& w) { return Eigen::VectorXd::Constant(1, w[0] * w[0]); },
                                   noise);
  EXPECT_NEAR(m2[0], var, 1e-12);
  EXPECT_NEAR(noise.truncation_mass()[0], mass, 1e-12);
}

TEST(TruncatedNormalExpectation, LinearityAndConvergencePlateau) {
  const TruncatedNormal noise(Eigen::Vector2d(0.1, -0.2), Eigen::Vector2d(0.4, 0.25),
                              Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)));
  auto f = [](const Eigen::VectorXd& w) {
    return Eigen::VectorXd::Constant(1, std::pow(w[0], 6) + 3 * w[0] * w[1] * w[1] - w[1]);
  };
  auto g = [](const Eigen::VectorXd& w) { return Eigen::VectorXd::Constant(1, std::pow(w[1], 10) + w[0] * w[0]); };
  auto fg = [&](const Eigen::VectorXd& w) { return Eigen::VectorXd(2.0 * f(w) - 0.5 * g(w)); };
  const double ef = truncated_normal_expectation(f, noise)[0], eg = truncated_normal_expectation(g, noise)[0];
  EXPECT_NEAR(truncated_normal_expectation(fg, noise)[0], 2.0 * ef - 0.5 * eg, 1e-12);
  const double ef80 = truncated_normal_expectation(f, noise, 80)[0];
  EXPECT_NEAR(ef80, ef, 1e-10 * std::max(1.0, std::abs(ef)));
}

TEST(TruncatedNormalExpectation, DegenerateTruncationThrows) {
  const TruncatedNormal noise(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.01),
                              Box(Eigen::VectorXd::Constant(1, 50.0), Eigen::VectorXd::Constant(1, 51.0)));
  EXPECT_THROW(truncated_normal_rule(noise), std::domain_error);
}

TEST(TruncatedNormalSampling, InsideSupportAndDeterministic) {
  const TruncatedNormal noise(Eigen::Vector2d::Zero(), Eigen::Vector2d(0.01, 2.0),
                              Box(Eigen::Vector2d(-1, -0.5), Eigen::Vector2d(1, 0.5)));
  for (std::uint64_t k = 0; k < 500; ++k) {
    const Eigen::VectorXd w = sample_truncated_normal(noise, 77, 2 * k);
    EXPECT_TRUE(noise.support.contains(w));
    EXPECT_TRUE((w.array() == sample_truncated_normal(noise, 77, 2 * k).array()).all());
  }
}
