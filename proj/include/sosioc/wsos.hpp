#pragma once

#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sosioc/polybasis.hpp"

namespace sosioc {

/// Dual WSOS cone over a box in the Lagrange basis of an interpolation grid
/// of degree 2k. Constraint 0 is the unweighted term with degree-k squares;
/// constraint i >= 1 carries g_i = (z_i - lo_i)(hi_i - z_i) with degree-(k-1)
/// squares.
struct WsosCone {
  int half_degree = 0;                // k
  Eigen::Index size = 0;              // D, the number of nodes
  std::vector<Eigen::MatrixXd> P;     // D x L_i
  std::vector<Eigen::VectorXd> g;     // g_i at the nodes
  Eigen::VectorXd lebesgue;           // integrals of the Lagrange basis

  int constraint_count() const { return static_cast<int>(P.size()); }
  Eigen::Index block_size(int i) const { return P[i].cols(); }
  /// Barrier parameter, the sum of the block sizes.
  double nu() const;
};

WsosCone build_cone(const InterpolationGrid& grid);

/// Lambda_i(y) = P_i^T diag(g_i o y) P_i for every constraint.
template <typename Derived>
std::vector<Eigen::MatrixXd> lambda_of(const WsosCone& cone, const Eigen::MatrixBase<Derived>& y) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(cone.P.size());
  for (std::size_t i = 0; i < cone.P.size(); ++i) {
    const Eigen::VectorXd w = cone.g[i].cwiseProduct(y.derived());
    out.push_back(cone.P[i].transpose() * w.asDiagonal() * cone.P[i]);
  }
  return out;
}

struct BarrierState {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // empty unless requested
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
};

/// F(y) = -sum_i log det Lambda_i(y). Throws std::domain_error naming the
/// first constraint whose Lambda_i is not positive definite.
BarrierState barrier(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& y,
                     bool with_hessian = true);

/// Upper-triangular R with R^T R equal to the barrier Hessian at y, from a QR
/// of the stacked factor J (rows g o (w_a o w_b), w_a the rows of
/// L_i^{-1} P_i^T). Avoids the squared conditioning of Cholesky on H.
Eigen::MatrixXd barrier_hessian_root(const WsosCone& cone, const BarrierState& state);

/// True when y is interior; never throws.
bool is_interior(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Smallest eigenvalue of every Lambda_i(y) >= -tol (1 + ||Lambda_i||).
bool dual_membership(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& y,
                     double tol = 1e-8);

/// Checks theta_j = sum_i g_i(node_j) p_i(node_j)^T S_i p_i(node_j) at every
/// node with all S_i PSD, both within tol.
bool primal_certificate_check(const WsosCone& cone, const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const std::vector<Eigen::MatrixXd>& grams, double tol = 1e-8);

}  // namespace sosioc
