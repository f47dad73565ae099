#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sosioc/ipm.hpp"
#include "sosioc/markov.hpp"
#include "sosioc/polybasis.hpp"
#include "sosioc/wsos.hpp"

namespace sosioc {

/// Approximate Fekete grid, memoized per (box, degree, density). Thread-safe.
std::shared_ptr<const InterpolationGrid> cached_fekete_grid(const Box& box, int degree,
                                                            double candidate_density = 4.0);

/// Data of the finite-dimensional estimator. Xi = [H, alpha G2 - G1]; the
/// unknown is theta = [theta_ell; theta_V] and theta_psi = Xi theta.
struct IocProblem {
  std::shared_ptr<const InterpolationGrid> grid;  // degree 2 d_psi over K
  std::shared_ptr<const WsosCone> cone;
  ChebyshevBasis value_basis;                     // degree 2 d_V over the value box
  Eigen::MatrixXd H;
  Eigen::MatrixXd G1;
  Eigen::MatrixXd G2;
  Eigen::MatrixXd Xi;
  Eigen::VectorXd h;
  Eigen::VectorXd d;
  int d_psi = 0;
  int d_V = 0;
  double alpha = 0.0;
  int trials = 0;
  int steps = 0;              // N, the per-trial step count
  int clipped_samples = 0;    // data pairs snapped into K
  int clipped_transitions = 0;  // quadrature points clipped in the adjoint rows

  int feature_count() const { return static_cast<int>(H.cols()); }
  int value_count() const { return static_cast<int>(G1.cols()); }
};

struct AssembleOptions {
  double candidate_density = 4.0;
  std::shared_ptr<const InterpolationGrid> grid;  // reuse instead of building
};

IocProblem assemble(const MarkovModel& model, int d_psi, int d_V, const std::vector<Trajectory>& dataset,
                    const AssembleOptions& options = {});

/// min -y_1  s.t. [Xi^T d, Xi^T] y = Xi^T h,  y in R_+ x K*.
ConicProgram to_conic(const IocProblem& problem);

struct CostEstimate {
  Eigen::VectorXd theta_ell;
  Eigen::VectorXd theta_V;
  Eigen::VectorXd theta_psi;
  double objective = 0.0;               // h^T theta_psi
  SolveStatus status = SolveStatus::NumericalFailure;
  Residuals residuals;
  int iterations = 0;
  double normalization_residual = 0.0;  // d^T theta_psi - 1
  double identity_residual = 0.0;       // ||theta_psi - Xi theta|| / max(1, ||theta_psi||)
  double psi_min = 0.0;                 // extremes of psi-hat on the evaluation grid
  double psi_max = 0.0;
  std::string message;
  std::vector<IterationRecord> log;
};

struct EstimateOptions {
  SolverConfig solver;
  int psi_grid_per_axis = 64;
};

CostEstimate estimate(const IocProblem& problem, const EstimateOptions& options = {});

/// Evaluator of psi-hat = theta_psi^T phi through orthogonal coefficients.
class PsiHat {
 public:
  PsiHat(const Eigen::VectorXd& theta_psi, std::shared_ptr<const InterpolationGrid> grid);

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& point) const;
  /// Gradient with respect to all coordinates of the point.
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& point) const;
  const Eigen::VectorXd& coefficients() const { return coeffs_; }

 private:
  std::shared_ptr<const InterpolationGrid> grid_;
  Eigen::VectorXd coeffs_;
};

double psi_hat_eval(const CostEstimate& estimate, const InterpolationGrid& grid,
                    const Eigen::Ref<const Eigen::VectorXd>& point);

/// (min, max) of psi-hat over a uniform tensor grid with `per_axis` points per axis.
std::pair<double, double> psi_hat_range(const PsiHat& psi, const Box& box, int per_axis);

/// || theta_est/|theta_est| - theta_true/|theta_true| || after dropping the
/// constant-feature coefficient and choosing the sign of theta_est.
double normalized_error(const Eigen::Ref<const Eigen::VectorXd>& theta_est,
                        const Eigen::Ref<const Eigen::VectorXd>& theta_true);

/// Structured report of an estimate (JSON).
std::string estimate_report_json(const CostEstimate& estimate, const IocProblem& problem,
                                 const std::string& solver_log_path = "");

}  // namespace sosioc
