#include <cmath>
#include <functional>
#include <sstream>

#include "sosioc/bench.hpp"
#include "sosioc/ioc.hpp"
#include "sosioc/polybasis.hpp"
#include "sosioc/random.hpp"
#include "sosioc/wsos.hpp"

namespace sosioc {
namespace {

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

CheckResult check(std::string name, const std::function<double()>& measure, double tol) {
  CheckResult r;
  r.name = std::move(name);
  try {
    const double v = measure();
    r.pass = std::isfinite(v) && v <= tol;
    r.detail = "value " + sci(v) + " tol " + sci(tol);
  } catch (const std::exception& e) {
    r.detail = std::string("threw: ") + e.what();
  }
  return r;
}

double monomial_integral(double lo, double hi, int k) {
  return (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / (k + 1);
}

}  // namespace

std::vector<CheckResult> verify_invariants(int jobs) {
  std::vector<CheckResult> out;
  const Box box2(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 1.0));
  const InterpolationGrid grid = select_fekete_nodes(2, 4, box2);

  out.push_back(check("lagrange partition of unity", [&] {
    CounterRng rng(1);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const Eigen::Vector2d p(rng.uniform(-1.0, 2.0), rng.uniform(0.0, 1.0));
      worst = std::max(worst, std::abs(lagrange_eval(grid, p).sum() - 1.0));
    }
    return worst;
  }, 1e-10));

  out.push_back(check("lagrange integration of monomials", [&] {
    const Eigen::VectorXd d = integrate_lagrange(grid);
    double worst = 0.0;
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; a + b <= 4; ++b) {
        Eigen::VectorXd f(grid.size());
        for (Eigen::Index j = 0; j < grid.size(); ++j) f[j] = std::pow(grid.nodes(0, j), a) * std::pow(grid.nodes(1, j), b);
        const double exact = monomial_integral(-1.0, 2.0, a) * monomial_integral(0.0, 1.0, b);
        worst = std::max(worst, std::abs(d.dot(f) - exact) / std::max(1.0, std::abs(exact)));
      }
    return worst;
  }, 1e-8));

  const WsosCone cone = build_cone(grid);
  out.push_back(check("barrier logarithmic homogeneity", [&] {
    const Eigen::VectorXd& y = cone.lebesgue;
    const double f1 = barrier(cone, y, false).value, f2 = barrier(cone, 2.0 * y, false).value;
    const BarrierState st = barrier(cone, y, false);
    return std::max(std::abs(f2 - (f1 - cone.nu() * std::log(2.0))), std::abs(-st.gradient.dot(y) - cone.nu()));
  }, 1e-9));

  out.push_back(check("barrier gradient vs finite differences", [&] {
    const Eigen::VectorXd& y = cone.lebesgue;
    CounterRng rng(2);
    Eigen::VectorXd dir(y.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.uniform(-1.0, 1.0) * y[i];
    const double h = 1e-6;
    const double fd = (barrier(cone, y + h * dir, false).value - barrier(cone, y - h * dir, false).value) / (2 * h);
    const double an = barrier(cone, y, false).gradient.dot(dir);
    return std::abs(fd - an) / std::max(1.0, std::abs(an));
  }, 1e-5));

  out.push_back(check("ray LP solution", [&] {
    // min -y1 - 2 y2  s.t.  y1 + y2 + y3 = 1,  y >= 0  ->  y = (0, 1, 0)
    ConicProgram lp;
    lp.c = Eigen::Vector3d(-1.0, -2.0, 0.0);
    lp.A = Eigen::RowVector3d(1.0, 1.0, 1.0);
    lp.b = Eigen::VectorXd::Ones(1);
    lp.cone.rays = 3;
    const ConicSolution sol = solve(lp);
    if (sol.status != SolveStatus::Optimal) return 1.0;
    return (sol.y - Eigen::Vector3d(0.0, 1.0, 0.0)).cwiseAbs().maxCoeff();
  }, 1e-6));

  out.push_back(check("smape of g = 3a", [] {
    const Policy g = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(3.0 * x); };
    SampleSet s;
    s.states = Eigen::RowVectorXd::LinSpaced(7, 0.5, 2.0);
    s.actions = s.states;
    return std::abs(smape(g, s) - 1.0);
  }, 1e-12));

  out.push_back(check("riccati fixed point", [] {
    const LqrSpec spec = lqr_experiment_spec(0.6, 0.3, 0.74);
    const LqrSolution sol = riccati_gain(spec);
    return (riccati_map(spec, sol.P) - sol.P).norm() / sol.P.norm();
  }, 1e-10));

  out.push_back(check("dataset independent of worker count", [&] {
    const MarkovModel m = pendulum_model();
    MpcSpec spec;
    spec.cost = feature_cost(m, Eigen::Vector4d(0.0, 100.0, 10.0, 1.0));
    spec.horizon = 16;
    const Policy expert = mpc_policy(m, spec);
    const auto init = InitialDistribution::uniform(Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)));
    const auto a = generate_dataset(m, expert, 4, 2, init, 9, 1);
    const auto b = generate_dataset(m, expert, 4, 2, init, 9, std::max(2, jobs));
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      diff += (a[i].states - b[i].states).cwiseAbs().sum() + (a[i].actions - b[i].actions).cwiseAbs().sum();
    return diff;
  }, 0.0));

  out.push_back(check("central histogram trim", [] {
    std::vector<double> v(1000);
    for (int i = 0; i < 1000; ++i) v[i] = i;
    v.push_back(1e9);  // an outlier beyond the central 99.5%
    int kept = 0;
    const auto bins = central_histogram(v, 10);
    for (const auto& b : bins) kept += b.count;
    return std::abs(kept - 995.0) + std::abs(bins.back().upper - quantile(v, 0.9975));
  }, 0.0));

  out.push_back(check("config fingerprint ignores output_dir and jobs", [] {
    ExperimentConfig a = preset_config("lqr"), b = a;
    b.output_dir = "elsewhere";
    b.jobs = 7;
    ExperimentConfig c = a;
    c.seed += 1;
    const ExperimentConfig parsed = parse_config(config_to_json(a));
    return (a.fingerprint() == b.fingerprint() && a.fingerprint() != c.fingerprint() &&
            parsed.fingerprint() == a.fingerprint())
               ? 0.0
               : 1.0;
  }, 0.0));

  return out;
}

}  // namespace sosioc
