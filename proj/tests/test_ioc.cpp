#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lqr_fixture.hpp"
#include "sosioc/ioc.hpp"
#include "sosioc/random.hpp"

using namespace sosioc;

namespace {

struct Solved {
  IocProblem problem;
  CostEstimate est;
};

const Solved& lqr_solved() {
  static const Solved s = [] {
    Solved out{assemble(lqr_model(), 3, 2, fixture::lqr_data()), {}};
    out.est = estimate(out.problem);
    return out;
  }();
  return s;
}

}  // namespace

TEST(Assemble, MomentVectorSumsToStepCount) {
  const auto data = fixture::lqr_data(1.0, 10, 7, 3);
  const IocProblem p = assemble(lqr_model(), 2, 1, data);
  EXPECT_NEAR(p.h.sum(), 7.0, 1e-9);
  EXPECT_EQ(p.trials, 10);
  EXPECT_EQ(p.steps, 7);
  EXPECT_NEAR(p.d.sum(), lqr_model().box.volume(), 1e-9 * lqr_model().box.volume());
}

TEST(Assemble, SampleAtNodeGivesUnitVector) {
  const MarkovModel m = lqr_model();
  const auto grid = cached_fekete_grid(m.box, 4);
  const Eigen::Index j = 5;
  Trajectory t;
  t.states = grid->node(j).head(2).transpose();
  t.actions = grid->node(j).tail(1).transpose();
  AssembleOptions opt;
  opt.grid = grid;
  const IocProblem p = assemble(m, 2, 1, {t}, opt);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(grid->size());
  e[j] = 1.0;
  EXPECT_LT((p.h - e).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Assemble, FeatureMatrixIsNodeEvaluation) {
  const MarkovModel m = lqr_model();
  const IocProblem p = assemble(m, 2, 1, fixture::lqr_data(1.0, 4, 2, 1));
  ASSERT_EQ(p.H.rows(), p.grid->size());
  ASSERT_EQ(p.H.cols(), 4);
  for (Eigen::Index j = 0; j < p.H.rows(); ++j) {
    const Eigen::VectorXd node = p.grid->node(j);
    EXPECT_LT((p.H.row(j).transpose() - m.feature_values(node.head(2), node.tail(1))).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_EQ(p.Xi.cols(), p.feature_count() + p.value_count());
  EXPECT_LT((p.Xi.rightCols(p.value_count()) - (p.alpha * p.G2 - p.G1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Assemble, TrialOrderDoesNotMatter) {
  auto data = fixture::lqr_data(1.0, 16, 4, 9);
  const IocProblem a = assemble(lqr_model(), 2, 1, data);
  std::reverse(data.begin(), data.end());
  const IocProblem b = assemble(lqr_model(), 2, 1, data);
  EXPECT_LE((a.h - b.h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ToConic, Shapes) {
  IocProblem p = assemble(lqr_model(), 2, 1, fixture::lqr_data(1.0, 4, 2, 1));
  const ConicProgram c = to_conic(p);
  EXPECT_EQ(c.A.cols(), 1 + p.grid->size());
  EXPECT_EQ(c.A.rows(), p.feature_count() + p.value_count());
  EXPECT_EQ(c.c[0], -1.0);
  EXPECT_EQ(c.c.tail(c.c.size() - 1).norm(), 0.0);
  EXPECT_EQ(c.cone.rays, 1);
  EXPECT_LT((c.A.col(0) - p.Xi.transpose() * p.d).norm(), 1e-12 * (1.0 + c.A.col(0).norm()));
  p.h.setZero();
  EXPECT_EQ(to_conic(p).b.norm(), 0.0);
}

TEST(Estimate, LqrFixture) {
  const Solved& s = lqr_solved();
  const CostEstimate& e = s.est;
  ASSERT_EQ(e.status, SolveStatus::Optimal) << e.message;
  EXPECT_LE(e.iterations, 200);
  EXPECT_LE(e.objective, 5e-3 * s.problem.steps);
  EXPECT_GE(s.problem.d.dot(e.theta_psi), 1.0 - 1e-6);
  EXPECT_LE(e.identity_residual, 1e-6);
  EXPECT_GE(e.psi_min, -1e-5 * std::max(std::abs(e.psi_min), std::abs(e.psi_max)));
  EXPECT_LT(normalized_error(e.theta_ell, fixture::lqr_theta()), 0.15);
}

TEST(Estimate, AverageAtSamplesIsTheObjective) {
  const Solved& s = lqr_solved();
  const auto data = fixture::lqr_data();
  double total = 0.0;
  for (const Trajectory& t : data)
    for (Eigen::Index k = 0; k < t.steps(); ++k) total += psi_hat_eval(s.est, *s.problem.grid, s.problem.grid->box.clamp(t.node(k)));
  EXPECT_NEAR(total / static_cast<double>(data.size()), s.est.objective, 1e-9 * std::max(1.0, std::abs(s.est.objective)));
}

TEST(Estimate, PsiHatNonnegativeAtRandomPoints) {
  const Solved& s = lqr_solved();
  const PsiHat psi(s.est.theta_psi, s.problem.grid);
  CounterRng rng(4);
  const Box& box = s.problem.grid->box;
  for (int k = 0; k < 10000; ++k) {
    Eigen::Vector3d p;
    for (int i = 0; i < 3; ++i) p[i] = rng.uniform(box.lower[i], box.upper[i]);
    ASSERT_GE(psi(p), -1e-5 * std::max(1.0, s.est.psi_max));
  }
}

TEST(Estimate, ScalingInvariance) {
  const IocProblem a = assemble(lqr_model(), 3, 2, fixture::lqr_data(1.0));
  const IocProblem b = assemble(lqr_model(), 3, 2, fixture::lqr_data(2.0));
  const CostEstimate ea = estimate(a), eb = estimate(b);
  ASSERT_EQ(ea.status, SolveStatus::Optimal);
  ASSERT_EQ(eb.status, SolveStatus::Optimal);
  EXPECT_LE((ea.theta_ell.normalized() - eb.theta_ell.normalized()).norm(), 1e-6);
}

TEST(PsiHat, GradientMatchesFiniteDifferences) {
  const Solved& s = lqr_solved();
  const PsiHat psi(s.est.theta_psi, s.problem.grid);
  const Eigen::Vector3d p(0.4, -1.2, 0.7);
  const Eigen::VectorXd g = psi.gradient(p);
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d h = Eigen::Vector3d::Zero();
    h[i] = 1e-5;
    const double fd = (psi(p + h) - psi(p - h)) / 2e-5;
    EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
  EXPECT_NEAR(psi(p), psi_hat_eval(s.est, *s.problem.grid, p), 1e-10 * std::max(1.0, std::abs(psi(p))));
  EXPECT_THROW(psi_hat_eval(s.est, *s.problem.grid, Eigen::Vector3d(6.0, 0.0, 0.0)), std::out_of_range);
}

TEST(NormalizedError, Examples) {
  const Eigen::Vector4d t(0.2, 1.0, 2.0, -0.5);
  EXPECT_NEAR(normalized_error(3.0 * t, t), 0.0, 1e-15);
  EXPECT_NEAR(normalized_error(-2.0 * t, t), 0.0, 1e-15);
  EXPECT_NEAR(normalized_error(Eigen::Vector3d(5.0, 1.0, 0.0), Eigen::Vector3d(-1.0, 0.0, 1.0)), std::sqrt(2.0), 1e-15);
  // The constant coefficient is ignored.
  EXPECT_NEAR(normalized_error(Eigen::Vector3d(100.0, 1.0, 1.0), Eigen::Vector3d(0.0, 2.0, 2.0)), 0.0, 1e-15);
  EXPECT_THROW(normalized_error(Eigen::Vector3d(1.0, 0.0, 0.0), t.head(3)), std::domain_error);
  EXPECT_THROW(normalized_error(t, t.head(3)), std::invalid_argument);
}
