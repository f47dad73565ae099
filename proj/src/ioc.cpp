#include "sosioc/ioc.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "sosioc/util.hpp"

namespace sosioc {

namespace {

using GridKey = std::tuple<std::vector<double>, int, double>;

GridKey grid_key(const Box& box, int degree, double density) {
  std::vector<double> bounds(box.lower.data(), box.lower.data() + box.dim());
  bounds.insert(bounds.end(), box.upper.data(), box.upper.data() + box.dim());
  return {bounds, degree, density};
}

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::shared_ptr<const WsosCone> cached_cone(const std::shared_ptr<const InterpolationGrid>& grid) {
  static std::map<const InterpolationGrid*, std::pair<std::shared_ptr<const InterpolationGrid>,
                                                      std::shared_ptr<const WsosCone>>> cache;
  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    auto it = cache.find(grid.get());
    if (it != cache.end()) return it->second.second;
  }
  auto cone = std::make_shared<const WsosCone>(build_cone(*grid));
  std::lock_guard<std::mutex> lock(cache_mutex());
  // Keep the grid alive so the pointer key cannot be reused.
  auto [it, inserted] = cache.emplace(grid.get(), std::make_pair(grid, cone));
  return it->second.second;
}

}  // namespace

std::shared_ptr<const InterpolationGrid> cached_fekete_grid(const Box& box, int degree,
                                                            double candidate_density) {
  static std::map<GridKey, std::shared_ptr<const InterpolationGrid>> cache;
  static std::mutex build_mutex;
  const GridKey key = grid_key(box, degree, candidate_density);
  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  // Builds are memory hungry at high degree; run them one at a time.
  std::lock_guard<std::mutex> build_lock(build_mutex);
  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto grid = std::make_shared<const InterpolationGrid>(
      select_fekete_nodes(static_cast<int>(box.dim()), degree, box, candidate_density));
  std::lock_guard<std::mutex> lock(cache_mutex());
  cache.emplace(key, grid);
  return grid;
}

IocProblem assemble(const MarkovModel& model, int d_psi, int d_V, const std::vector<Trajectory>& dataset,
                    const AssembleOptions& options) {
  model.validate();
  if (d_psi < 1) throw std::invalid_argument("assemble: d_psi must be >= 1");
  if (d_V < 0) throw std::invalid_argument("assemble: d_V must be >= 0");
  if (dataset.empty()) throw std::invalid_argument("assemble: empty dataset");
  const int nx = model.state_dim, na = model.action_dim;

  IocProblem p;
  p.d_psi = d_psi;
  p.d_V = d_V;
  p.alpha = model.discount;
  p.grid = options.grid ? options.grid : cached_fekete_grid(model.box, 2 * d_psi, options.candidate_density);
  if (p.grid->degree != 2 * d_psi || p.grid->box.lower != model.box.lower || p.grid->box.upper != model.box.upper)
    throw std::invalid_argument("assemble: supplied grid does not match the model box and degree");
  p.cone = cached_cone(p.grid);
  p.value_basis = ChebyshevBasis(model.value_box(), 2 * d_V);

  const InterpolationGrid& grid = *p.grid;
  const Eigen::Index D = grid.size();
  const int nl = model.feature_count();
  const Eigen::Index DV = p.value_basis.size();
  p.H.resize(D, nl);
  p.G1.resize(D, DV);
  p.G2.resize(D, DV);
  const TransitionExpectation qstar(model);
  const ChebyshevBasis& r = p.value_basis;
  const VectorFunction rfun = [&r](const Eigen::VectorXd& x) { return r.eval(x); };
  for (Eigen::Index j = 0; j < D; ++j) {
    const Eigen::VectorXd node = grid.node(j);
    p.H.row(j) = model.feature_values(model.state_of(node), model.action_of(node)).transpose();
    p.G1.row(j) = r.eval(model.state_of(node)).transpose();
    p.G2.row(j) = qstar(node, rfun, &p.clipped_transitions).transpose();
  }
  p.Xi.resize(D, nl + DV);
  p.Xi << p.H, p.alpha * p.G2 - p.G1;

  // h = (1/M) sum_i sum_t phi(eta_t^i) = V^{-T} (1/M) sum b(eta).
  CompensatedSum<double> acc(grid.basis.size());
  p.trials = static_cast<int>(dataset.size());
  p.steps = 0;
  for (const auto& traj : dataset) {
    if (traj.states.cols() != nx || traj.actions.cols() != na || traj.actions.rows() != traj.states.rows())
      throw std::invalid_argument("assemble: trajectory dimensions do not match the model");
    p.steps = std::max(p.steps, static_cast<int>(traj.steps()));
    for (Eigen::Index t = 0; t < traj.steps(); ++t) {
      Eigen::VectorXd eta = traj.node(t);
      if (!grid.box.contains(eta)) {
        eta = grid.box.clamp(eta);
        ++p.clipped_samples;
      }
      acc.add(grid.basis.eval(eta));
    }
  }
  p.h = grid.vandermonde_lu.transpose().solve(acc.value() / static_cast<double>(p.trials));
  p.d = p.cone->lebesgue;
  return p;
}

ConicProgram to_conic(const IocProblem& problem) {
  const Eigen::Index D = problem.Xi.rows();
  ConicProgram prog;
  prog.c = Eigen::VectorXd::Zero(1 + D);
  prog.c[0] = -1.0;
  prog.A.resize(problem.Xi.cols(), 1 + D);
  prog.A.col(0) = problem.Xi.transpose() * problem.d;
  prog.A.rightCols(D) = problem.Xi.transpose();
  prog.b = problem.Xi.transpose() * problem.h;
  prog.cone.rays = 1;
  prog.cone.wsos = problem.cone;
  return prog;
}

PsiHat::PsiHat(const Eigen::VectorXd& theta_psi, std::shared_ptr<const InterpolationGrid> grid)
    : grid_(std::move(grid)) {
  coeffs_ = to_orthogonal_coefficients(*grid_, theta_psi);
}

double PsiHat::operator()(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  return coeffs_.dot(grid_->basis.eval(point));
}

Eigen::VectorXd PsiHat::gradient(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  return grid_->basis.jacobian(point).transpose() * coeffs_;
}

double psi_hat_eval(const CostEstimate& estimate, const InterpolationGrid& grid,
                    const Eigen::Ref<const Eigen::VectorXd>& point) {
  return estimate.theta_psi.dot(lagrange_eval(grid, point));
}

std::pair<double, double> psi_hat_range(const PsiHat& psi, const Box& box, int per_axis) {
  if (per_axis < 2) throw std::invalid_argument("psi_hat_range: need at least 2 points per axis");
  const Eigen::Index n = box.dim();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd p(n);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i)
      p[i] = box.lower[i] + box.width()[i] * idx[static_cast<std::size_t>(i)] / (per_axis - 1.0);
    const double v = psi(box.clamp(p));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    Eigen::Index i = n - 1;
    for (; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < per_axis) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
    if (i < 0) break;
  }
  return {lo, hi};
}

CostEstimate estimate(const IocProblem& problem, const EstimateOptions& options) {
  const ConicProgram prog = to_conic(problem);
  const ConicSolution sol = solve(prog, options.solver);
  const Eigen::Index D = problem.Xi.rows();
  const int nl = problem.feature_count();

  CostEstimate est;
  est.status = sol.status;
  est.residuals = sol.residuals;
  est.iterations = sol.iterations;
  est.log = sol.log;
  const Eigen::VectorXd theta = -sol.lam;
  est.theta_ell = theta.head(nl);
  est.theta_V = theta.tail(theta.size() - nl);
  est.theta_psi = sol.s.tail(D);
  est.objective = problem.h.dot(est.theta_psi);
  est.normalization_residual = problem.d.dot(est.theta_psi) - 1.0;
  est.identity_residual =
      (est.theta_psi - problem.Xi * theta).norm() / std::max(1.0, est.theta_psi.norm());
  const PsiHat psi(est.theta_psi, problem.grid);
  std::tie(est.psi_min, est.psi_max) = psi_hat_range(psi, problem.grid->box, options.psi_grid_per_axis);

  est.message = sol.message;
  if (est.status == SolveStatus::Optimal && est.identity_residual > 1e-6) {
    est.status = SolveStatus::NumericalFailure;
    est.message = "recovered theta_psi disagrees with Xi theta";
  }
  if (est.status != SolveStatus::Optimal)
    est.message += "; consider adding data or increasing the polynomial degrees";
  return est;
}

double normalized_error(const Eigen::Ref<const Eigen::VectorXd>& theta_est,
                        const Eigen::Ref<const Eigen::VectorXd>& theta_true) {
  if (theta_est.size() != theta_true.size() || theta_est.size() < 2)
    throw std::invalid_argument("normalized_error: size mismatch");
  const Eigen::VectorXd e = theta_est.tail(theta_est.size() - 1);
  const Eigen::VectorXd t = theta_true.tail(theta_true.size() - 1);
  const double ne = e.norm(), nt = t.norm();
  if (!(ne > 0.0) || !(nt > 0.0)) throw std::domain_error("normalized_error: zero coefficient vector");
  const double sign = e.dot(t) >= 0.0 ? 1.0 : -1.0;
  return (sign * e / ne - t / nt).norm();
}

std::string estimate_report_json(const CostEstimate& estimate, const IocProblem& problem,
                                 const std::string& solver_log_path) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "cost_estimate";
  j["status"] = to_string(estimate.status);
  j["message"] = estimate.message;
  j["iterations"] = estimate.iterations;
  j["theta_ell"] = vec(estimate.theta_ell);
  j["theta_V"] = vec(estimate.theta_V);
  j["theta_psi"] = vec(estimate.theta_psi);
  j["objective"] = estimate.objective;
  j["residuals"] = {{"primal", estimate.residuals.primal},
                    {"dual", estimate.residuals.dual},
                    {"gap", estimate.residuals.gap},
                    {"normalization", estimate.normalization_residual},
                    {"identity", estimate.identity_residual}};
  j["psi_hat"] = {{"min", estimate.psi_min}, {"max", estimate.psi_max}};
  j["degrees"] = {{"d_psi", problem.d_psi}, {"d_V", problem.d_V}};
  j["data"] = {{"trials", problem.trials},
               {"steps", problem.steps},
               {"clipped_samples", problem.clipped_samples},
               {"clipped_transitions", problem.clipped_transitions}};
  j["grid_fingerprint"] = grid_fingerprint(*problem.grid);
  j["solver_log"] = solver_log_path;
  return j.dump(2) + "\n";
}

}  // namespace sosioc
