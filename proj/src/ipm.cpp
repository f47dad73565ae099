#include "sosioc/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "sosioc/util.hpp"

namespace sosioc {

void ConicProgram::validate() const {
  if (cone.dim() < 1) throw std::invalid_argument("ConicProgram: empty cone");
  if (c.size() != cone.dim() || A.cols() != cone.dim())
    throw std::invalid_argument("ConicProgram: cone dimension does not match c/A");
  if (A.rows() != b.size()) throw std::invalid_argument("ConicProgram: A and b disagree on row count");
  if (!A.allFinite() || !b.allFinite() || !c.allFinite())
    throw std::invalid_argument("ConicProgram: non-finite data");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::IterLimit: return "IterLimit";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

namespace {

// Gradient and Hessian H = L L^T of the product barrier at an interior point;
// on the WSOS block L = R^T from barrier_hessian_root.
struct ProductBarrier {
  Eigen::VectorXd grad;
  Eigen::VectorXd ray_sqrt;  // diagonal of L on the ray block, 1 / y
  Eigen::MatrixXd wsos_root;  // R, upper triangular
  bool accurate = true;       // false: Cholesky of an ill-conditioned H, fit only for screening

  Eigen::Index rays() const { return ray_sqrt.size(); }

  // L^{-1} v
  Eigen::MatrixXd lower_solve(const Eigen::MatrixXd& v) const {
    Eigen::MatrixXd out(v.rows(), v.cols());
    out.topRows(rays()) = ray_sqrt.cwiseInverse().asDiagonal() * v.topRows(rays());
    if (v.rows() > rays())
      out.bottomRows(v.rows() - rays()) =
          wsos_root.transpose().triangularView<Eigen::Lower>().solve(v.bottomRows(v.rows() - rays()));
    return out;
  }

  // L^{-T} v
  Eigen::VectorXd upper_solve(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    out.head(rays()) = v.head(rays()).cwiseQuotient(ray_sqrt);
    if (v.size() > rays())
      out.tail(v.size() - rays()) = wsos_root.triangularView<Eigen::Upper>().solve(v.tail(v.size() - rays()));
    return out;
  }

  // L v
  Eigen::VectorXd lower_mul(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    out.head(rays()) = v.head(rays()).cwiseProduct(ray_sqrt);
    if (v.size() > rays())
      out.tail(v.size() - rays()).noalias() =
          wsos_root.transpose().triangularView<Eigen::Lower>() * v.tail(v.size() - rays());
    return out;
  }

  // H v = L L^T v
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd lt(v.size());
    lt.head(rays()) = v.head(rays()).cwiseProduct(ray_sqrt);
    if (v.size() > rays())
      lt.tail(v.size() - rays()).noalias() = wsos_root.triangularView<Eigen::Upper>() * v.tail(v.size() - rays());
    return lower_mul(lt);
  }
};

// Smallest accepted diag(L) ratio for the Cholesky factor of H (cond(H) < 1e8).
constexpr double kCholeskyRatio = 1e-4;

// With `screening` set, any successful Cholesky of H is kept; line searches
// only need the proximity measure, not an accurate Newton system.
std::optional<ProductBarrier> evaluate_barrier(const ProductCone& cone, const Eigen::VectorXd& y,
                                               bool screening = false) {
  if (!y.allFinite()) return std::nullopt;
  ProductBarrier pb;
  const Eigen::VectorXd rays = y.head(cone.rays);
  if ((rays.array() <= 0.0).any()) return std::nullopt;
  pb.grad.resize(y.size());
  pb.grad.head(cone.rays) = -rays.cwiseInverse();
  pb.ray_sqrt = rays.cwiseInverse();
  if (cone.wsos) {
    BarrierState st;
    try {
      st = barrier(*cone.wsos, y.tail(cone.wsos->size), true);
    } catch (const std::domain_error&) {
      return std::nullopt;
    }
    pb.grad.tail(cone.wsos->size) = st.gradient;
    // Cholesky of H is cheap and fine while H is well conditioned; near the
    // boundary it squares cond(Lambda) and the QR root takes over.
    const Eigen::LLT<Eigen::MatrixXd> llt(st.hessian);
    bool cheap = llt.info() == Eigen::Success;
    if (cheap) {
      const Eigen::VectorXd d = llt.matrixLLT().diagonal().cwiseAbs();
      pb.accurate = d.minCoeff() > kCholeskyRatio * d.maxCoeff();
      cheap = pb.accurate || screening;
    }
    pb.wsos_root = cheap ? Eigen::MatrixXd(llt.matrixU()) : barrier_hessian_root(*cone.wsos, st);
    const auto diag = pb.wsos_root.diagonal().cwiseAbs();
    if (!pb.wsos_root.allFinite() || !(diag.minCoeff() > 0.0)) return std::nullopt;
  }
  return pb;
}

struct Iterate {
  Eigen::VectorXd y, lam, s;
};

struct Direction {
  Eigen::VectorXd dy, dlam, ds;
};

// Reduced, row-equilibrated copy of the program the iteration runs on.
struct WorkingProgram {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd row_scale;  // original lam = row_scale o working lam on kept rows
  double b_scale = 1.0;       // original y = working y / b_scale
  std::vector<int> kept;
  std::vector<int> dropped;
};

WorkingProgram reduce(const ConicProgram& p, double rank_tol) {
  WorkingProgram w;
  const Eigen::Index m = p.A.rows();
  if (m == 0) {
    w.A = p.A;
    w.b = p.b;
    w.row_scale.resize(0);
    return w;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p.A.transpose());
  qr.setThreshold(rank_tol);
  const Eigen::Index rank = qr.rank();
  const auto& perm = qr.colsPermutation().indices();
  std::vector<bool> keep(static_cast<std::size_t>(m), false);
  for (Eigen::Index k = 0; k < rank; ++k) keep[static_cast<std::size_t>(perm[k])] = true;
  for (int i = 0; i < m; ++i) (keep[static_cast<std::size_t>(i)] ? w.kept : w.dropped).push_back(i);
  w.A.resize(static_cast<Eigen::Index>(w.kept.size()), p.A.cols());
  w.b.resize(static_cast<Eigen::Index>(w.kept.size()));
  w.row_scale.resize(static_cast<Eigen::Index>(w.kept.size()));
  for (std::size_t k = 0; k < w.kept.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const double norm = p.A.row(w.kept[k]).norm();
    w.row_scale[r] = 1.0 / norm;
    w.A.row(r) = p.A.row(w.kept[k]) / norm;
    w.b[r] = p.b[w.kept[k]] / norm;
  }
  return w;
}

Eigen::VectorXd expand_lam(const WorkingProgram& w, const Eigen::VectorXd& lam, Eigen::Index rows) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows);
  for (std::size_t k = 0; k < w.kept.size(); ++k)
    out[w.kept[k]] = w.row_scale[static_cast<Eigen::Index>(k)] * lam[static_cast<Eigen::Index>(k)];
  return out;
}

// Newton system  A dy = r1,  A^T dlam + ds = r2,  ds + mu H dy = r3.
// With H = L L^T and Abar = A L^{-T}, the Schur complement Abar Abar^T is
// factored through a QR of Abar^T (never squared), and two rounds of
// iterative refinement clean up the ill-conditioning near the boundary.
class NewtonSystem {
 public:
  NewtonSystem(const WorkingProgram& w, const ProductBarrier& pb) : w_(w), pb_(pb) {
    abar_t_ = pb.lower_solve(w.A.transpose());
    qr_.compute(abar_t_);
    const Eigen::Index m = w.A.rows();
    const auto R = qr_.matrixQR().topLeftCorner(m, m);
    const double big = m > 0 ? R.diagonal().cwiseAbs().maxCoeff() : 1.0;
    ok_ = abar_t_.allFinite() && (m == 0 || R.diagonal().cwiseAbs().minCoeff() > 1e-15 * big);
  }

  bool ok() const { return ok_; }

  Direction solve(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, const Eigen::VectorXd& r3,
                  double mu, int refinements = 2) const {
    Direction d = solve_once(r1, r2, r3, mu);
    for (int k = 0; k < refinements; ++k) {
      const Eigen::VectorXd e1 = r1 - w_.A * d.dy;
      const Eigen::VectorXd e2 = r2 - w_.A.transpose() * d.dlam - d.ds;
      const Eigen::VectorXd e3 = r3 - d.ds - mu * pb_.apply(d.dy);
      const Direction c = solve_once(e1, e2, e3, mu);
      d.dy += c.dy;
      d.dlam += c.dlam;
      d.ds += c.ds;
    }
    return d;
  }

 private:
  Direction solve_once(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, const Eigen::VectorXd& r3,
                       double mu) const {
    const Eigen::Index m = w_.A.rows();
    const Eigen::VectorXd tb = pb_.lower_solve(r3 - r2).col(0);
    Eigen::VectorXd rhs = mu * r1 - abar_t_.transpose() * tb;
    const auto R = qr_.matrixQR().topLeftCorner(m, m).template triangularView<Eigen::Upper>();
    R.transpose().solveInPlace(rhs);
    R.solveInPlace(rhs);
    Direction d;
    d.dlam = rhs;
    const Eigen::VectorXd zb = abar_t_ * d.dlam + tb;  // L^T (mu dy)
    d.dy = pb_.upper_solve(zb) / mu;
    d.ds = r3 - pb_.lower_mul(zb);
    return d;
  }

  const WorkingProgram& w_;
  const ProductBarrier& pb_;
  Eigen::MatrixXd abar_t_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  bool ok_ = false;
};

double duality_measure(const Iterate& it, double nu) { return it.y.dot(it.s) / nu; }

// ||s/mu + g||_{H^-1}; infinite when the point is not usable.
double proximity(const ProductBarrier& pb, const Iterate& it, double mu) {
  if (!(mu > 0.0)) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd v = it.s / mu + pb.grad;
  const double q = pb.lower_solve(v).norm();
  return std::isfinite(q) ? q : std::numeric_limits<double>::infinity();
}

Iterate step(const Iterate& it, const Direction& d, double alpha) {
  return {it.y + alpha * d.dy, it.lam + alpha * d.dlam, it.s + alpha * d.ds};
}

}  // namespace

PrimalDualPoint initial_point(const ConicProgram& program) {
  program.validate();
  const ProductCone& cone = program.cone;
  PrimalDualPoint pt;
  pt.y.resize(cone.dim());
  pt.y.head(cone.rays).setOnes();
  if (cone.wsos) {
    if (!is_interior(*cone.wsos, cone.wsos->lebesgue))
      throw std::runtime_error("initial_point: Lebesgue moments are not interior to the dual cone");
    pt.y.tail(cone.wsos->size) = cone.wsos->lebesgue;
  }
  const auto pb = evaluate_barrier(cone, pt.y);
  if (!pb) throw std::runtime_error("initial_point: barrier undefined at the starting point");
  pt.s = -pb->grad;
  pt.lam = Eigen::VectorXd::Zero(program.A.rows());
  return pt;
}

Residuals residuals(const ConicProgram& program, const Eigen::Ref<const Eigen::VectorXd>& y,
                    const Eigen::Ref<const Eigen::VectorXd>& lam, const Eigen::Ref<const Eigen::VectorXd>& s) {
  Residuals r;
  r.primal = (program.A * y - program.b).norm() / (1.0 + program.b.norm());
  r.dual = (program.A.transpose() * lam + s - program.c).norm() / (1.0 + program.c.norm());
  const double pobj = program.c.dot(y);
  r.gap = std::abs(pobj - program.b.dot(lam)) / (1.0 + std::abs(pobj));
  return r;
}

ConicSolution solve(const ConicProgram& program, const SolverConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");
  program.validate();
  const ProductCone& cone = program.cone;
  const double nu = cone.nu();
  WorkingProgram w = reduce(program, cfg.rank_tol);
  const PrimalDualPoint start = initial_point(program);
  // Rescale b so the starting point's primal infeasibility is commensurate
  // with mu0 = 1; the program is homogeneous in (y, b).
  if (cfg.balance_rhs && w.b.norm() > 0.0) {
    w.b_scale = (w.A * start.y).norm() / w.b.norm();
    w.b *= w.b_scale;
  }

  ConicSolution sol;
  sol.dropped_rows = w.dropped;
  Iterate it{start.y, Eigen::VectorXd::Zero(w.A.rows()), start.s};

  auto finish = [&](SolveStatus status, std::string message) {
    sol.y = it.y / w.b_scale;
    sol.lam = expand_lam(w, it.lam, program.A.rows());
    sol.s = it.s;
    sol.residuals = residuals(program, sol.y, sol.lam, sol.s);
    sol.status = status;
    sol.message = std::move(message);
    return sol;
  };

  double last_step = 0.0;
  for (int k = 0;; ++k) {
    const Residuals res = residuals(program, it.y / w.b_scale, expand_lam(w, it.lam, program.A.rows()), it.s);
    const double mu = duality_measure(it, nu);
    sol.log.push_back({k, mu / w.b_scale, res, last_step});
    sol.iterations = k;
    if (res.within(cfg.tol)) return finish(SolveStatus::Optimal, "converged");
    if (k >= cfg.max_iter) {
      const double p0 = sol.log.front().res.primal;
      if (res.primal > 0.5 * p0 && p0 > cfg.tol)
        return finish(SolveStatus::Infeasible, "primal residual did not decrease; program is likely infeasible");
      return finish(SolveStatus::IterLimit, "iteration limit reached");
    }

    auto pb = evaluate_barrier(cone, it.y);
    if (!pb) return finish(SolveStatus::NumericalFailure, "iterate lost interiority");
    NewtonSystem sys(w, *pb);
    if (!sys.ok()) return finish(SolveStatus::NumericalFailure, "Schur complement is not positive definite");

    // Predictor: affine-scaling direction toward mu = 0 with the residuals removed.
    const Eigen::VectorXd rp = w.b - w.A * it.y;
    const Eigen::VectorXd rd = program.c - w.A.transpose() * it.lam - it.s;
    const Direction pred = sys.solve(rp, rd, -it.s, mu);
    double alpha = 1.0;
    std::optional<ProductBarrier> next_pb;
    Iterate next;
    bool accepted = false;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt, alpha *= cfg.shrink) {
      next = step(it, pred, alpha);
      next_pb = evaluate_barrier(cone, next.y, true);
      if (!next_pb) continue;
      const double next_mu = duality_measure(next, nu);
      if (proximity(*next_pb, next, next_mu) <= cfg.eta) {
        accepted = true;
        break;
      }
    }
    if (!accepted) return finish(SolveStatus::NumericalFailure, "no admissible predictor step after backtracking");
    it = std::move(next);
    last_step = alpha;

    // Correctors: recenter at the current duality measure, residuals untouched.
    for (int c = 0; c < cfg.max_correctors; ++c) {
      const double cmu = duality_measure(it, nu);
      const double prox = proximity(*next_pb, it, cmu);
      if (prox <= cfg.center_eta) break;
      if (!next_pb->accurate) next_pb = evaluate_barrier(cone, it.y);
      if (!next_pb) break;
      NewtonSystem csys(w, *next_pb);
      if (!csys.ok()) break;
      const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(w.A.rows());
      const Eigen::VectorXd zero_d = Eigen::VectorXd::Zero(it.y.size());
      const Direction corr = csys.solve(zero_p, zero_d, -it.s - cmu * next_pb->grad, cmu);
      double beta = 1.0;
      bool improved = false;
      for (int bt = 0; bt <= cfg.max_backtracks; ++bt, beta *= cfg.shrink) {
        Iterate trial = step(it, corr, beta);
        auto trial_pb = evaluate_barrier(cone, trial.y, true);
        if (!trial_pb) continue;
        if (proximity(*trial_pb, trial, duality_measure(trial, nu)) < prox) {
          it = std::move(trial);
          next_pb = std::move(trial_pb);
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
  }
}

void write_iteration_log(std::ostream& os, const std::vector<IterationRecord>& log) {
  os << "iter,mu,primal_res,dual_res,gap,step_len\n";
  for (const auto& r : log) {
    os << r.iter << ',' << fmt17(r.mu) << ',' << fmt17(r.res.primal) << ',' << fmt17(r.res.dual) << ','
       << fmt17(r.res.gap) << ',' << fmt17(r.step_len) << '\n';
  }
}

}  // namespace sosioc
