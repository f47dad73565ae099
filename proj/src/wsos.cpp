#include "sosioc/wsos.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace sosioc {

double WsosCone::nu() const {
  double v = 0.0;
  for (const auto& p : P) v += static_cast<double>(p.cols());
  return v;
}

WsosCone build_cone(const InterpolationGrid& grid) {
  if (grid.degree < 2 || grid.degree % 2 != 0)
    throw std::invalid_argument("build_cone: grid degree must be even and >= 2");
  const int k = grid.degree / 2;
  const Box& box = grid.box;
  const int n = grid.dim();
  const Eigen::Index D = grid.size();

  WsosCone cone;
  cone.half_degree = k;
  cone.size = D;
  const ChebyshevBasis full(box, k), reduced(box, k - 1);

  Eigen::MatrixXd P0(D, full.size()), P1(D, reduced.size());
  for (Eigen::Index j = 0; j < D; ++j) {
    P0.row(j) = full.eval(grid.nodes.col(j)).transpose();
    P1.row(j) = reduced.eval(grid.nodes.col(j)).transpose();
  }
  cone.P.push_back(P0);
  cone.g.push_back(Eigen::VectorXd::Ones(D));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd gi(D);
    for (Eigen::Index j = 0; j < D; ++j) {
      const double z = grid.nodes(i, j);
      // Nodes sit inside the box, but rounding may push a boundary node by an ulp.
      gi[j] = std::max(0.0, (z - box.lower[i]) * (box.upper[i] - z));
    }
    cone.P.push_back(P1);
    cone.g.push_back(gi);
  }
  for (int i = 0; i < cone.constraint_count(); ++i) {
    const Eigen::VectorXd w = cone.g[i].cwiseSqrt();
    Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(w.asDiagonal() * cone.P[i]);
    if (qr.rank() < cone.P[i].cols())
      throw std::runtime_error("build_cone: weighted P_" + std::to_string(i) + " is rank deficient");
  }
  cone.lebesgue = integrate_lagrange(grid);
  return cone;
}

BarrierState barrier(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& y,
                     bool with_hessian) {
  if (y.size() != cone.size) throw std::invalid_argument("barrier: dimension mismatch");
  BarrierState st;
  st.gradient = Eigen::VectorXd::Zero(cone.size);
  if (with_hessian) st.hessian = Eigen::MatrixXd::Zero(cone.size, cone.size);
  const auto lambdas = lambda_of(cone, y);
  for (int i = 0; i < cone.constraint_count(); ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(lambdas[i]);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("barrier: Lambda_" + std::to_string(i) + " is not positive definite");
    const auto L = llt.matrixL();
    double logdet = 0.0;
    for (Eigen::Index r = 0; r < lambdas[i].rows(); ++r) {
      const double diag = llt.matrixLLT()(r, r);
      if (!(diag > 0.0))
        throw std::domain_error("barrier: Lambda_" + std::to_string(i) + " is not positive definite");
      logdet += 2.0 * std::log(diag);
    }
    st.value -= logdet;
    const Eigen::MatrixXd W = L.solve(cone.P[i].transpose());  // L_i x D
    if (with_hessian) {
      const Eigen::MatrixXd M = W.transpose() * W;  // p_k^T Lambda^-1 p_l
      st.gradient -= cone.g[i].cwiseProduct(M.diagonal());
      st.hessian.noalias() += (cone.g[i] * cone.g[i].transpose()).cwiseProduct(M.cwiseAbs2());
    } else {
      st.gradient -= cone.g[i].cwiseProduct(W.colwise().squaredNorm().transpose());
    }
    st.factors.push_back(std::move(llt));
  }
  return st;
}

Eigen::MatrixXd barrier_hessian_root(const WsosCone& cone, const BarrierState& state) {
  if (static_cast<int>(state.factors.size()) != cone.constraint_count())
    throw std::invalid_argument("barrier_hessian_root: barrier state lacks factors");
  Eigen::Index rows = 0;
  for (int i = 0; i < cone.constraint_count(); ++i) rows += cone.block_size(i) * (cone.block_size(i) + 1) / 2;
  Eigen::MatrixXd J(std::max(rows, cone.size), cone.size);
  J.setZero();
  Eigen::Index r = 0;
  for (int i = 0; i < cone.constraint_count(); ++i) {
    const Eigen::MatrixXd W = state.factors[i].matrixL().solve(cone.P[i].transpose());
    const Eigen::RowVectorXd g = cone.g[i].transpose();
    for (Eigen::Index a = 0; a < W.rows(); ++a) {
      J.row(r++) = W.row(a).cwiseAbs2().cwiseProduct(g);
      for (Eigen::Index b = a + 1; b < W.rows(); ++b)
        J.row(r++) = std::sqrt(2.0) * W.row(a).cwiseProduct(W.row(b)).cwiseProduct(g);
    }
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(J);
  return qr.matrixQR().topRows(cone.size).triangularView<Eigen::Upper>();
}

bool is_interior(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() != cone.size || !y.allFinite()) return false;
  for (const auto& lam : lambda_of(cone, y)) {
    Eigen::LLT<Eigen::MatrixXd> llt(lam);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) return false;
  }
  return true;
}

bool dual_membership(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& y, double tol) {
  if (y.size() != cone.size) return false;
  for (const auto& lam : lambda_of(cone, y)) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lam, Eigen::EigenvaluesOnly);
    const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -tol * (1.0 + norm)) return false;
  }
  return true;
}

bool primal_certificate_check(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const std::vector<Eigen::MatrixXd>& grams, double tol) {
  if (theta.size() != cone.size || static_cast<int>(grams.size()) != cone.constraint_count())
    throw std::invalid_argument("primal_certificate_check: dimension mismatch");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cone.size);
  for (int i = 0; i < cone.constraint_count(); ++i) {
    const auto& S = grams[i];
    if (S.rows() != cone.block_size(i) || S.cols() != cone.block_size(i))
      throw std::invalid_argument("primal_certificate_check: Gram " + std::to_string(i) + " has the wrong shape");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) return false;
    rhs += cone.g[i].cwiseProduct((cone.P[i] * S).cwiseProduct(cone.P[i]).rowwise().sum());
  }
  return ((theta - rhs).array().abs() <= tol * (1.0 + theta.array().abs())).all();
}

}  // namespace sosioc
