#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/Dense>

#include "lp_oracle.hpp"
#include "sosioc/ipm.hpp"
#include "sosioc/polybasis.hpp"
#include "sosioc/random.hpp"
#include "sosioc/wsos.hpp"

using namespace sosioc;

namespace {

ConicProgram simple_lp() {
  ConicProgram lp;
  lp.c = Eigen::Vector2d(-1.0, 0.0);
  lp.A = Eigen::RowVector2d(1.0, 1.0);
  lp.b = Eigen::VectorXd::Ones(1);
  lp.cone.rays = 2;
  return lp;
}

// min x^T y s.t. 1^T y = 1, y in K*: the dual maximizes t with x - t in K.
ConicProgram wsos_boundary_program(int d_psi) {
  const Box box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));
  const InterpolationGrid grid = select_fekete_nodes(1, 2 * d_psi, box);
  ConicProgram p;
  p.cone.wsos = std::make_shared<const WsosCone>(build_cone(grid));
  p.c = grid.nodes.row(0).transpose();
  p.A = Eigen::RowVectorXd::Ones(grid.size());
  p.b = Eigen::VectorXd::Ones(1);
  return p;
}

}  // namespace

TEST(Solve, TwoRayExample) {
  const ConicProgram lp = simple_lp();
  const ConicSolution sol = solve(lp);
  ASSERT_EQ(sol.status, SolveStatus::Optimal) << sol.message;
  EXPECT_NEAR(sol.y[0], 1.0, 1e-8);
  EXPECT_NEAR(sol.y[1], 0.0, 1e-8);
  EXPECT_NEAR(lp.c.dot(sol.y), -1.0, 1e-8);
  EXPECT_TRUE(sol.residuals.within(1e-8));
}

TEST(Solve, RandomLpsMatchVertexEnumeration) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ConicProgram lp = fixture::random_lp(1000 + seed);
    Eigen::VectorXd y_oracle;
    const double v = fixture::vertex_oracle(lp, &y_oracle);
    ASSERT_TRUE(std::isfinite(v));
    const ConicSolution sol = solve(lp);
    ASSERT_EQ(sol.status, SolveStatus::Optimal) << seed << " " << sol.message;
    EXPECT_NEAR(lp.c.dot(sol.y), v, 1e-6 * std::max(1.0, std::abs(v))) << seed;
    EXPECT_LT((sol.y - y_oracle).cwiseAbs().maxCoeff(), 1e-6) << seed;
    EXPECT_GE(sol.y.minCoeff(), -1e-8);
    EXPECT_NEAR(lp.b.dot(sol.lam), v, 1e-6 * std::max(1.0, std::abs(v))) << seed;
  }
}

TEST(Solve, WsosBoundaryProblem) {
  // Grid oracle: the largest t with x - t >= 0 at every grid point.
  double t_grid = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 10000; ++j) t_grid = std::min(t_grid, -1.0 + 2.0 * j / 10000.0);
  for (int d_psi : {1, 2, 3}) {
    const ConicProgram p = wsos_boundary_program(d_psi);
    const ConicSolution sol = solve(p);
    ASSERT_EQ(sol.status, SolveStatus::Optimal) << sol.message;
    EXPECT_NEAR(sol.lam[0], t_grid, 1e-6) << d_psi;
    EXPECT_NEAR(p.c.dot(sol.y), t_grid, 1e-6) << d_psi;
    EXPECT_TRUE(dual_membership(*p.cone.wsos, sol.y, 1e-8));
  }
}

TEST(Solve, InfeasibleIsNotOptimal) {
  ConicProgram lp = simple_lp();
  lp.b = -Eigen::VectorXd::Ones(1);
  const ConicSolution sol = solve(lp);
  EXPECT_NE(sol.status, SolveStatus::Optimal);
}

TEST(Solve, RedundantRowsAreDropped) {
  ConicProgram lp = simple_lp();
  lp.A = Eigen::MatrixXd(2, 2);
  lp.A << 1.0, 1.0, 2.0, 2.0;
  lp.b = Eigen::Vector2d(1.0, 2.0);
  const ConicSolution sol = solve(lp);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_EQ(sol.dropped_rows.size(), 1u);
  EXPECT_NEAR(sol.y[0], 1.0, 1e-8);
}

TEST(Solve, DeterministicAndDualityMeasureDecreases) {
  const ConicProgram p = wsos_boundary_program(2);
  const ConicSolution a = solve(p), b = solve(p);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) EXPECT_EQ(a.log[k].mu, b.log[k].mu);
  EXPECT_TRUE((a.y.array() == b.y.array()).all());
  for (std::size_t k = 5; k < a.log.size(); ++k) EXPECT_LE(a.log[k].mu, a.log[k - 5].mu);
}

TEST(InitialPoint, CentredOnTheLebesgueMoments) {
  ConicProgram p = wsos_boundary_program(2);
  const PrimalDualPoint z = initial_point(p);
  EXPECT_NEAR(z.y.dot(z.s), p.cone.nu(), 1e-9);
  EXPECT_NEAR(z.y.dot(z.s) / p.cone.nu(), 1.0, 1e-9);
  EXPECT_EQ(z.lam.norm(), 0.0);
  EXPECT_TRUE(dual_membership(*p.cone.wsos, z.y));

  const ConicProgram lp = simple_lp();
  const PrimalDualPoint r = initial_point(lp);
  EXPECT_TRUE((r.y.array() == 1.0).all());
  EXPECT_NEAR(r.y.dot(r.s), 2.0, 1e-12);
}

TEST(Residuals, Definitions) {
  const ConicProgram lp = simple_lp();
  const Eigen::Vector2d y(1.0, 0.0);
  const Eigen::VectorXd lam = Eigen::VectorXd::Constant(1, -1.0);
  const Eigen::Vector2d s(0.0, 1.0);
  const Residuals exact = residuals(lp, y, lam, s);
  EXPECT_LE(exact.primal, 1e-12);
  EXPECT_LE(exact.dual, 1e-12);
  EXPECT_LE(exact.gap, 1e-12);

  const PrimalDualPoint z = initial_point(lp);
  EXPECT_NEAR(residuals(lp, z.y, z.lam, z.s).primal, (lp.A * z.y - lp.b).norm() / (1.0 + lp.b.norm()), 1e-15);

  // Perturbing by eps moves the residuals linearly.
  const Eigen::Vector2d dir(0.3, -0.7);
  const double r1 = residuals(lp, y + 1e-6 * dir, lam, s).primal, r2 = residuals(lp, y + 1e-5 * dir, lam, s).primal;
  EXPECT_GT(r2 / r1, 1.0);
  EXPECT_NEAR(r2 / r1, 10.0, 1e-6);
}
