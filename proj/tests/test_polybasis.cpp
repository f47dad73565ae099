#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sosioc/polybasis.hpp"
#include "sosioc/random.hpp"

using namespace sosioc;

namespace {

Box cube(int n, double lo, double hi) {
  return Box(Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi));
}

double monomial(const Eigen::VectorXd& p, const Eigen::RowVectorXi& e) {
  double v = 1.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) v *= std::pow(p[i], e[i]);
  return v;
}

double monomial_integral(const Box& box, const Eigen::RowVectorXi& e) {
  double v = 1.0;
  for (Eigen::Index i = 0; i < box.dim(); ++i)
    v *= (std::pow(box.upper[i], e[i] + 1) - std::pow(box.lower[i], e[i] + 1)) / (e[i] + 1);
  return v;
}

}  // namespace

TEST(BasisDimension, Binomials) {
  EXPECT_EQ(basis_dimension(3, 6), 84u);
  EXPECT_EQ(basis_dimension(1, 0), 1u);
  EXPECT_EQ(basis_dimension(2, 2), 6u);
  EXPECT_EQ(basis_dimension(3, 10), 286u);
}

TEST(BasisDimension, OverflowIsReported) {
  EXPECT_THROW(basis_dimension(200, 200), std::overflow_error);
}

TEST(OrthogonalBasis, ChebyshevValues) {
  const Eigen::VectorXd a = orthogonal_basis_eval(1, 2, cube(1, -1, 1), Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(a[0], 1.0, 1e-15);
  EXPECT_NEAR(a[1], 0.0, 1e-15);
  EXPECT_NEAR(a[2], -1.0, 1e-15);

  const Eigen::VectorXd b = orthogonal_basis_eval(1, 1, cube(1, 0, 2), Eigen::VectorXd::Constant(1, 2.0));
  EXPECT_NEAR(b[0], 1.0, 1e-15);
  EXPECT_NEAR(b[1], 1.0, 1e-15);

  const Eigen::VectorXd c = orthogonal_basis_eval(2, 2, cube(2, -1, 1), Eigen::Vector2d(1.0, 1.0));
  EXPECT_EQ(c.size(), 6);
  EXPECT_NEAR((c.array() - 1.0).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(OrthogonalBasis, OutsideBoxThrows) {
  EXPECT_THROW(orthogonal_basis_eval(1, 2, cube(1, -1, 1), Eigen::VectorXd::Constant(1, 1.5)), std::out_of_range);
}

TEST(OrthogonalBasis, JacobianMatchesFiniteDifferences) {
  const ChebyshevBasis basis(Box(Eigen::Vector3d(-1, 0, 2), Eigen::Vector3d(1, 3, 5)), 4);
  const Eigen::Vector3d p(0.3, 1.1, 3.7);
  const Eigen::MatrixXd J = basis.jacobian(p);
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d h = Eigen::Vector3d::Zero();
    h[k] = 1e-6;
    const Eigen::VectorXd fd = (basis.eval(p + h) - basis.eval(p - h)) / 2e-6;
    EXPECT_LT((fd - J.col(k)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Fekete, OneDimensionalQuadraticPicksEndpointsAndCentre) {
  // Brute force over all candidate triples: |det V| is maximized by {-1, 0, 1}.
  // Density 4.3 gives 13 Chebyshev-Lobatto candidates, the centre among them.
  const InterpolationGrid g = select_fekete_nodes(1, 2, cube(1, -1, 1), 4.3);
  std::vector<double> nodes(g.nodes.data(), g.nodes.data() + g.size());
  std::sort(nodes.begin(), nodes.end());
  ASSERT_EQ(nodes.size(), 3u);
  EXPECT_NEAR(nodes[0], -1.0, 1e-6);
  EXPECT_NEAR(nodes[1], 0.0, 1e-6);
  EXPECT_NEAR(nodes[2], 1.0, 1e-6);
}

TEST(Fekete, LinearPicksEndpoints) {
  const InterpolationGrid g = select_fekete_nodes(1, 1, cube(1, 0, 1));
  std::vector<double> nodes(g.nodes.data(), g.nodes.data() + g.size());
  std::sort(nodes.begin(), nodes.end());
  EXPECT_NEAR(nodes[0], 0.0, 1e-12);
  EXPECT_NEAR(nodes[1], 1.0, 1e-12);
}

TEST(Fekete, BruteForceDeterminantOracle) {
  // Degree 3 on [0, 2] from a 16-point candidate grid: compare |det V| of the
  // greedy choice with the best over all 4-subsets.
  const Box box = cube(1, 0, 2);
  const InterpolationGrid g = select_fekete_nodes(1, 3, box, 4.0);
  const int m = 16;
  Eigen::VectorXd cand(m);
  for (int i = 0; i < m; ++i) cand[i] = 1.0 - std::cos(M_PI * i / (m - 1));
  auto det_of = [&](const std::vector<double>& pts) {
    Eigen::MatrixXd V(4, 4);
    for (int r = 0; r < 4; ++r) V.row(r) = orthogonal_basis_eval(1, 3, box, Eigen::VectorXd::Constant(1, pts[r])).transpose();
    return std::abs(V.determinant());
  };
  double best = 0.0;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      for (int c = b + 1; c < m; ++c)
        for (int d = c + 1; d < m; ++d) best = std::max(best, det_of({cand[a], cand[b], cand[c], cand[d]}));
  std::vector<double> chosen(g.nodes.data(), g.nodes.data() + 4);
  // Greedy pivoting is an approximation; it must come within a modest factor.
  EXPECT_GE(det_of(chosen), 0.5 * best);
  EXPECT_TRUE(std::isfinite(g.condition_number));
}

TEST(Fekete, NodeCountAndContainment) {
  const Box box(Eigen::Vector3d(-5, -5, -5), Eigen::Vector3d(5, 5, 5));
  const InterpolationGrid g = select_fekete_nodes(3, 6, box);
  EXPECT_EQ(g.size(), 84);
  for (Eigen::Index j = 0; j < g.size(); ++j) EXPECT_TRUE(box.contains(g.node(j)));
  EXPECT_TRUE(std::isfinite(g.condition_number));
}

TEST(Fekete, Deterministic) {
  const Box box = cube(2, -1, 1);
  const InterpolationGrid a = select_fekete_nodes(2, 4, box), b = select_fekete_nodes(2, 4, box);
  EXPECT_EQ(grid_fingerprint(a), grid_fingerprint(b));
  EXPECT_TRUE((a.nodes.array() == b.nodes.array()).all());
}

TEST(Lagrange, KroneckerAndPartitionOfUnity) {
  const Box box(Eigen::Vector3d(-1, 0, 2), Eigen::Vector3d(1, 3, 5));
  const InterpolationGrid g = select_fekete_nodes(3, 4, box);
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(g.size());
    e[j] = 1.0;
    EXPECT_LT((lagrange_eval(g, g.node(j)) - e).cwiseAbs().maxCoeff(), 1e-10);
  }
  CounterRng rng(5);
  for (int k = 0; k < 1000; ++k) {
    Eigen::Vector3d p;
    for (int i = 0; i < 3; ++i) p[i] = rng.uniform(box.lower[i], box.upper[i]);
    EXPECT_NEAR(lagrange_eval(g, p).sum(), 1.0, 1e-10);
  }
}

TEST(Lagrange, LinearHats) {
  const InterpolationGrid g = select_fekete_nodes(1, 1, cube(1, -1, 1));
  const Eigen::VectorXd phi = lagrange_eval(g, Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(phi[0], 0.5, 1e-14);
  EXPECT_NEAR(phi[1], 0.5, 1e-14);
  EXPECT_THROW(lagrange_eval(g, Eigen::VectorXd::Constant(1, 2.0)), std::out_of_range);
}

class Exactness : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(Exactness, InterpolationAndIntegrationOfMonomials) {
  const auto [n, d_psi] = GetParam();
  Eigen::VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    lo[i] = -1.0 + 0.5 * i;
    hi[i] = 2.0 + i;
  }
  const Box box(lo, hi);
  const InterpolationGrid g = select_fekete_nodes(n, 2 * d_psi, box);
  const Eigen::VectorXd d = integrate_lagrange(g);
  EXPECT_NEAR(d.sum(), box.volume(), 1e-10 * box.volume());
  const Eigen::MatrixXi E = graded_exponents(n, 2 * d_psi);
  CounterRng rng(11);
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p[i] = rng.uniform(lo[i], hi[i]);
    pts.push_back(p);
  }
  for (Eigen::Index r = 0; r < E.rows(); ++r) {
    Eigen::VectorXd vals(g.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) vals[j] = monomial(g.node(j), E.row(r));
    const double exact = monomial_integral(box, E.row(r));
    EXPECT_NEAR(d.dot(vals), exact, 1e-8 * std::max(1.0, std::abs(exact))) << "exponent row " << r;
    const double scale = vals.cwiseAbs().maxCoeff();
    for (const auto& p : pts) EXPECT_NEAR(lagrange_eval(g, p).dot(vals), monomial(p, E.row(r)), 1e-8 * scale);
  }
}

INSTANTIATE_TEST_SUITE_P(Grids, Exactness,
                         ::testing::Values(std::pair{1, 3}, std::pair{2, 3}, std::pair{3, 2}));

TEST(Integration, KnownValues) {
  const InterpolationGrid g1 = select_fekete_nodes(1, 1, cube(1, -1, 1));
  EXPECT_NEAR(integrate_lagrange(g1)[0], 1.0, 1e-14);
  EXPECT_NEAR(integrate_lagrange(g1)[1], 1.0, 1e-14);

  const InterpolationGrid g2 = select_fekete_nodes(2, 4, cube(2, -1, 1));
  Eigen::VectorXd vals(g2.size());
  for (Eigen::Index j = 0; j < g2.size(); ++j) vals[j] = std::pow(g2.nodes(0, j) * g2.nodes(1, j), 2);
  EXPECT_NEAR(integrate_lagrange(g2).dot(vals), 4.0 / 9.0, 1e-10);
}

TEST(GridSerialization, RoundTripIsBitwise) {
  const InterpolationGrid g = select_fekete_nodes(2, 4, Box(Eigen::Vector2d(-1, 0.5), Eigen::Vector2d(3, 2)));
  const InterpolationGrid back = grid_from_json(grid_to_json(g));
  EXPECT_TRUE((g.nodes.array() == back.nodes.array()).all());
  EXPECT_EQ(grid_fingerprint(g), grid_fingerprint(back));
}
