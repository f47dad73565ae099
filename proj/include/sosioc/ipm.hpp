#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sosioc/wsos.hpp"

namespace sosioc {

/// Ordered product R_+^rays x K* (the WSOS factor is optional).
struct ProductCone {
  int rays = 0;
  std::shared_ptr<const WsosCone> wsos;

  Eigen::Index dim() const { return rays + (wsos ? wsos->size : 0); }
  double nu() const { return rays + (wsos ? wsos->nu() : 0.0); }
};

/// min c^T y  s.t.  A y = b,  y in cone.  Dual: max b^T lam, s = c - A^T lam.
struct ConicProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  ProductCone cone;

  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, IterLimit, NumericalFailure };
std::string to_string(SolveStatus status);

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;

  bool within(double tol) const { return primal <= tol && dual <= tol && gap <= tol; }
};

struct IterationRecord {
  int iter = 0;
  double mu = 0.0;
  Residuals res;
  double step_len = 0.0;
};

struct SolverConfig {
  double tol = 1e-8;
  int max_iter = 400;
  double eta = 0.5;           // predictor neighborhood radius
  double center_eta = 0.25;   // correctors run until inside this radius
  int max_correctors = 4;
  double shrink = 0.8;
  int max_backtracks = 60;
  double rank_tol = 1e-10;    // relative threshold for dropping dependent rows
  bool balance_rhs = true;    // rescale b internally to match the starting point
};

struct ConicSolution {
  Eigen::VectorXd y;
  Eigen::VectorXd lam;
  Eigen::VectorXd s;
  SolveStatus status = SolveStatus::NumericalFailure;
  int iterations = 0;
  Residuals residuals;
  std::vector<int> dropped_rows;
  std::vector<IterationRecord> log;
  std::string message;
};

struct PrimalDualPoint {
  Eigen::VectorXd y;
  Eigen::VectorXd lam;
  Eigen::VectorXd s;
};

/// y0 = (1,...,1, Lebesgue moments), s0 = -grad F(y0), lam0 = 0.
PrimalDualPoint initial_point(const ConicProgram& program);

/// Normalized primal, dual and gap residuals.
Residuals residuals(const ConicProgram& program, const Eigen::Ref<const Eigen::VectorXd>& y,
                    const Eigen::Ref<const Eigen::VectorXd>& lam, const Eigen::Ref<const Eigen::VectorXd>& s);

/// Predictor-corrector path following on the primal barrier.
ConicSolution solve(const ConicProgram& program, const SolverConfig& config = {});

/// CSV with header iter,mu,primal_res,dual_res,gap,step_len.
void write_iteration_log(std::ostream& os, const std::vector<IterationRecord>& log);

}  // namespace sosioc
