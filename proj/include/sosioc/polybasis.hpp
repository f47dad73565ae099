#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>

#include "sosioc/box.hpp"

namespace sosioc {

/// Number of n-variate polynomials of total degree <= d, i.e. C(n+d, d).
/// Throws std::overflow_error instead of wrapping.
std::size_t basis_dimension(int n, int d);

/// Exponents of the graded basis, one multi-index per row. Row 0 is the
/// constant; within a degree the first coordinate runs from high to low.
Eigen::MatrixXi graded_exponents(int n, int d);

/// T_0(t) .. T_d(t) (first kind) and, optionally, their derivatives.
template <typename Scalar>
void chebyshev_values(Scalar t, int d, Scalar* values, Scalar* derivs = nullptr) {
  values[0] = Scalar(1);
  if (d >= 1) values[1] = t;
  for (int k = 2; k <= d; ++k) values[k] = Scalar(2) * t * values[k - 1] - values[k - 2];
  if (derivs == nullptr) return;
  // T_k' = k U_{k-1}
  Scalar u_prev = Scalar(0), u = Scalar(1);
  derivs[0] = Scalar(0);
  for (int k = 1; k <= d; ++k) {
    derivs[k] = Scalar(k) * u;
    const Scalar u_next = Scalar(2) * t * u - u_prev;
    u_prev = u;
    u = u_next;
  }
}

/// Tensor Chebyshev basis truncated to total degree, affinely mapped from a
/// box to [-1, 1]^n.
class ChebyshevBasis {
 public:
  ChebyshevBasis() = default;
  ChebyshevBasis(Box box, int degree);

  int dim() const { return static_cast<int>(box_.dim()); }
  int degree() const { return degree_; }
  Eigen::Index size() const { return exponents_.rows(); }
  const Box& box() const { return box_; }
  const Eigen::MatrixXi& exponents() const { return exponents_; }

  /// Checked evaluation; throws std::out_of_range outside the box.
  Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& point) const;
  /// Evaluation without the range check (polynomials extend to R^n).
  Eigen::VectorXd eval_unchecked(const Eigen::Ref<const Eigen::VectorXd>& point) const;
  /// size() x dim() matrix of partial derivatives in box coordinates.
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& point) const;
  /// Exact integrals of every basis element over the box.
  Eigen::VectorXd moments() const;
  /// Evaluate at every column of `points`; result is size() x points.cols().
  Eigen::MatrixXd eval_many(const Eigen::Ref<const Eigen::MatrixXd>& points) const;

 private:
  Box box_;
  int degree_ = 0;
  Eigen::MatrixXi exponents_;
};

Eigen::VectorXd orthogonal_basis_eval(int n, int d, const Box& box,
                                      const Eigen::Ref<const Eigen::VectorXd>& point);

/// Interpolation nodes plus the factorized node Vandermonde
/// V(j, k) = b_k(node_j). Immutable after construction.
struct InterpolationGrid {
  Box box;
  int degree = 0;
  double candidate_density = 4.0;
  Eigen::MatrixXd nodes;  // dim x size, one node per column
  ChebyshevBasis basis;
  Eigen::MatrixXd vandermonde;
  Eigen::PartialPivLU<Eigen::MatrixXd> vandermonde_lu;
  double condition_number = 0.0;

  int dim() const { return static_cast<int>(box.dim()); }
  Eigen::Index size() const { return nodes.cols(); }
  Eigen::VectorXd node(Eigen::Index j) const { return nodes.col(j); }
};

/// Approximate Fekete points: greedy column-pivoted QR over a tensor
/// Chebyshev-Gauss-Lobatto candidate grid with ceil(density*(d+1)) points per axis.
InterpolationGrid select_fekete_nodes(int n, int d, const Box& box,
                                      double candidate_density = 4.0);

/// Rebuilds a grid from explicit nodes (used when replaying a saved grid).
InterpolationGrid grid_from_nodes(const Box& box, int d, Eigen::MatrixXd nodes,
                                  double candidate_density = 4.0);

/// Lagrange basis phi(point) = V^{-T} b(point).
Eigen::VectorXd lagrange_eval(const InterpolationGrid& grid,
                              const Eigen::Ref<const Eigen::VectorXd>& point);

/// Lagrange values at each column of `points` (size x cols).
Eigen::MatrixXd lagrange_eval_many(const InterpolationGrid& grid,
                                   const Eigen::Ref<const Eigen::MatrixXd>& points);

/// d_k = integral of phi_k over the box.
Eigen::VectorXd integrate_lagrange(const InterpolationGrid& grid);

/// Orthogonal-basis coefficients c of the interpolant of `node_values`, so
/// that node_values^T phi(p) = c^T b(p).
Eigen::VectorXd to_orthogonal_coefficients(const InterpolationGrid& grid,
                                           const Eigen::Ref<const Eigen::VectorXd>& node_values);

std::string grid_to_json(const InterpolationGrid& grid);
InterpolationGrid grid_from_json(const std::string& text);
/// Hex FNV-1a of the serialized grid.
std::string grid_fingerprint(const InterpolationGrid& grid);

}  // namespace sosioc
