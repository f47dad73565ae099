#include "sosioc/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "sosioc/parallel.hpp"
#include "sosioc/random.hpp"

namespace sosioc {

void LqrSpec::validate() const {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw std::invalid_argument("LqrSpec: inconsistent dimensions");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("LqrSpec: alpha must lie in (0, 1)");
  Eigen::LLT<Eigen::MatrixXd> r(R);
  if (r.info() != Eigen::Success) throw std::invalid_argument("LqrSpec: R must be positive definite");
  const Eigen::LDLT<Eigen::MatrixXd> q(Q);
  if ((q.vectorD().array() < -1e-12 * (1.0 + Q.norm())).any())
    throw std::invalid_argument("LqrSpec: Q must be positive semidefinite");
}

namespace {

Eigen::MatrixXd gain_at(const LqrSpec& s, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd S = s.R + s.alpha * s.B.transpose() * P * s.B;
  return S.ldlt().solve(s.alpha * s.B.transpose() * P * s.A);
}

}  // namespace

Eigen::MatrixXd riccati_map(const LqrSpec& s, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd K = gain_at(s, P);
  Eigen::MatrixXd next = s.Q + s.alpha * s.A.transpose() * P * s.A - s.alpha * s.A.transpose() * P * s.B * K;
  return 0.5 * (next + next.transpose());
}

LqrSolution riccati_gain(const LqrSpec& spec, double tol, int max_iter) {
  spec.validate();
  LqrSolution sol;
  Eigen::MatrixXd P = spec.Q;
  for (int k = 1; k <= max_iter; ++k) {
    const Eigen::MatrixXd next = riccati_map(spec, P);
    const double delta = (next - P).norm();
    P = next;
    if (!P.allFinite()) break;
    if (delta <= tol * std::max(1.0, P.norm())) {
      sol.P = P;
      sol.K = gain_at(spec, P);
      sol.iterations = k;
      return sol;
    }
  }
  throw std::runtime_error("riccati_gain: no convergence (is (A, B) stabilizable under the discount?)");
}

LqrSpec lqr_experiment_spec(double q1, double q2, double r) {
  LqrSpec s;
  s.A = (Eigen::Matrix2d() << 1.0, 0.1, 0.0, 1.0).finished();
  s.B = (Eigen::Vector2d() << 0.005, 0.1).finished();
  s.Q = Eigen::Vector2d(q1, q2).asDiagonal();
  s.R = Eigen::MatrixXd::Constant(1, 1, r);
  s.alpha = 0.99;
  return s;
}

RunningCost feature_cost(const MarkovModel& model, const Eigen::VectorXd& theta) {
  if (theta.size() != model.feature_count()) throw std::invalid_argument("feature_cost: theta size mismatch");
  auto features = model.features;
  return [features, theta](const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    double v = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) v += theta[static_cast<Eigen::Index>(i)] * features[i].eval(x, a);
    return v;
  };
}

namespace {

struct StageModel {
  Eigen::MatrixXd fx, fu;
  Eigen::VectorXd lx, lu;
  Eigen::MatrixXd lxx, luu, lux;
};

double step_for(double v, double rel) { return rel * std::max(1.0, std::abs(v)); }

// Central differences; the cost Hessian uses a wider step since all costs of
// interest are smooth and low-degree.
// The planner sees the same state-box clipping that simulate applies.
Eigen::VectorXd nominal_step(const MarkovModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  return m.state_box().clamp(m.dynamics(x, u));
}

StageModel linearize(const MarkovModel& m, const RunningCost& cost, double weight, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, double rel) {
  const Eigen::Index n = x.size(), k = u.size();
  StageModel s;
  s.fx.resize(n, n);
  s.fu.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = step_for(x[i], rel);
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    s.fx.col(i) = (nominal_step(m, xp, u) - nominal_step(m, xm, u)) / (2.0 * h);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const double h = step_for(u[i], rel);
    Eigen::VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    s.fu.col(i) = (nominal_step(m, x, up) - nominal_step(m, x, um)) / (2.0 * h);
  }

  const Eigen::Index d = n + k;
  Eigen::VectorXd z(d);
  z << x, u;
  auto f = [&](const Eigen::VectorXd& zz) { return weight * cost(zz.head(n), zz.tail(k)); };
  Eigen::VectorXd g(d);
  Eigen::MatrixXd H(d, d);
  const double f0 = f(z);
  const double hrel = std::sqrt(rel) * 3e-1;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double h = step_for(z[i], rel);
    Eigen::VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    g[i] = (f(zp) - f(zm)) / (2.0 * h);
    const double hh = step_for(z[i], hrel);
    zp = z;
    zm = z;
    zp[i] += hh;
    zm[i] -= hh;
    H(i, i) = (f(zp) - 2.0 * f0 + f(zm)) / (hh * hh);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double hi = step_for(z[i], hrel), hj = step_for(z[j], hrel);
      auto at = [&](double si, double sj) {
        Eigen::VectorXd zz = z;
        zz[i] += si * hi;
        zz[j] += sj * hj;
        return f(zz);
      };
      H(i, j) = H(j, i) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
    }
  }
  s.lx = g.head(n);
  s.lu = g.tail(k);
  s.lxx = H.topLeftCorner(n, n);
  s.luu = H.bottomRightCorner(k, k);
  s.lux = H.bottomLeftCorner(k, n);
  return s;
}

double rollout_cost(const MarkovModel& m, const MpcSpec& spec, const Eigen::VectorXd& x0,
                    const Eigen::MatrixXd& U, Eigen::MatrixXd* X) {
  Eigen::VectorXd x = x0;
  double J = 0.0, w = 1.0;
  if (X) X->row(0) = x0.transpose();
  for (int t = 0; t < spec.horizon; ++t) {
    const Eigen::VectorXd u = U.row(t).transpose();
    J += w * spec.cost(x, u);
    x = nominal_step(m, x, u);
    if (X) X->row(t + 1) = x.transpose();
    w *= spec.alpha;
  }
  return J;
}

}  // namespace

MpcPlan ilqr_plan(const MarkovModel& model, const MpcSpec& spec, const Eigen::VectorXd& x0) {
  if (spec.horizon < 1) throw std::invalid_argument("MpcSpec: horizon must be >= 1");
  if (!spec.cost) throw std::invalid_argument("MpcSpec: running cost missing");
  const int T = spec.horizon;
  const Eigen::Index n = model.state_dim, k = model.action_dim;
  const Box ubox = model.action_box();

  MpcPlan plan;
  plan.actions = Eigen::MatrixXd::Zero(T, k);
  for (int t = 0; t < T; ++t) plan.actions.row(t) = ubox.clamp(Eigen::VectorXd::Zero(k)).transpose();
  plan.states.resize(T + 1, n);
  double J = rollout_cost(model, spec, x0, plan.actions, &plan.states);
  plan.cost_history.push_back(J);

  double reg = spec.reg_init;
  std::vector<StageModel> stages(static_cast<std::size_t>(T));
  std::vector<Eigen::VectorXd> kff(static_cast<std::size_t>(T));
  std::vector<Eigen::MatrixXd> Kfb(static_cast<std::size_t>(T));
  bool need_linearize = true;

  for (int iter = 0; iter < spec.max_iter; ++iter) {
    plan.iterations = iter + 1;
    if (need_linearize) {
      double w = 1.0;
      for (int t = 0; t < T; ++t) {
        stages[static_cast<std::size_t>(t)] = linearize(model, spec.cost, w, plan.states.row(t).transpose(),
                                                        plan.actions.row(t).transpose(), spec.fd_step);
        w *= spec.alpha;
      }
      need_linearize = false;
    }

    // Backward pass; on an indefinite Q_uu raise the regularization and retry.
    bool backward_ok = false;
    double max_ff = 0.0;
    while (!backward_ok) {
      Eigen::VectorXd Vx = Eigen::VectorXd::Zero(n);
      Eigen::MatrixXd Vxx = Eigen::MatrixXd::Zero(n, n);
      backward_ok = true;
      max_ff = 0.0;
      for (int t = T - 1; t >= 0; --t) {
        const StageModel& s = stages[static_cast<std::size_t>(t)];
        const Eigen::VectorXd Qx = s.lx + s.fx.transpose() * Vx;
        const Eigen::VectorXd Qu = s.lu + s.fu.transpose() * Vx;
        const Eigen::MatrixXd Qxx = s.lxx + s.fx.transpose() * Vxx * s.fx;
        const Eigen::MatrixXd Quu = s.luu + s.fu.transpose() * Vxx * s.fu;
        const Eigen::MatrixXd Qux = s.lux + s.fu.transpose() * Vxx * s.fx;
        const Eigen::MatrixXd Quu_reg = Quu + reg * Eigen::MatrixXd::Identity(k, k);
        Eigen::LLT<Eigen::MatrixXd> llt(Quu_reg);
        if (llt.info() != Eigen::Success) {
          backward_ok = false;
          break;
        }
        Eigen::VectorXd ff = -llt.solve(Qu);
        Eigen::MatrixXd fb = -llt.solve(Qux);
        // Clamp the feedforward into the box and drop feedback on clamped components.
        const Eigen::VectorXd u = plan.actions.row(t).transpose();
        for (Eigen::Index i = 0; i < k; ++i) {
          const double target = u[i] + ff[i];
          const double clamped = std::clamp(target, ubox.lower[i], ubox.upper[i]);
          if (clamped != target) {
            ff[i] = clamped - u[i];
            fb.row(i).setZero();
          }
        }
        max_ff = std::max(max_ff, ff.cwiseAbs().maxCoeff());
        Vx = Qx + fb.transpose() * Quu * ff + fb.transpose() * Qu + Qux.transpose() * ff;
        Vxx = Qxx + fb.transpose() * Quu * fb + fb.transpose() * Qux + Qux.transpose() * fb;
        Vxx = 0.5 * (Vxx + Vxx.transpose());
        kff[static_cast<std::size_t>(t)] = ff;
        Kfb[static_cast<std::size_t>(t)] = fb;
      }
      if (!backward_ok) {
        reg *= spec.reg_factor;
        if (reg > spec.reg_max) return plan;
      }
    }
    if (max_ff <= 1e-12) {
      plan.converged = true;
      return plan;
    }

    // Forward pass with a halving line search; accept only cost decreases.
    bool accepted = false;
    double step = 1.0;
    for (int ls = 0; ls < spec.line_search_steps; ++ls, step *= 0.5) {
      Eigen::MatrixXd U(T, k), X(T + 1, n);
      Eigen::VectorXd x = x0;
      X.row(0) = x0.transpose();
      for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd dx = x - plan.states.row(t).transpose();
        Eigen::VectorXd u = plan.actions.row(t).transpose() + step * kff[static_cast<std::size_t>(t)] +
                            Kfb[static_cast<std::size_t>(t)] * dx;
        u = ubox.clamp(u);
        U.row(t) = u.transpose();
        x = nominal_step(model, x, u);
        X.row(t + 1) = x.transpose();
      }
      const double Jn = rollout_cost(model, spec, x0, U, nullptr);
      if (std::isfinite(Jn) && Jn < J) {
        const double decrease = J - Jn;
        plan.actions = std::move(U);
        plan.states = std::move(X);
        J = Jn;
        plan.cost_history.push_back(J);
        accepted = true;
        need_linearize = true;
        reg = std::max(spec.reg_init, reg / spec.reg_factor);
        if (decrease <= spec.tol * (1.0 + std::abs(J))) {
          plan.converged = true;
          return plan;
        }
        break;
      }
    }
    if (!accepted) {
      reg *= spec.reg_factor;
      if (reg > spec.reg_max) {
        // No descent left at any regularization: a (local) optimum up to noise.
        plan.converged = max_ff <= 1e-6;
        return plan;
      }
    }
  }
  return plan;
}

Eigen::VectorXd mpc_action(const MarkovModel& model, const MpcSpec& spec, const Eigen::VectorXd& x) {
  const MpcPlan plan = ilqr_plan(model, spec, x);
  return model.action_box().clamp(Eigen::VectorXd(plan.actions.row(0).transpose()));
}

Policy mpc_policy(MarkovModel planning_model, MpcSpec spec) {
  return [model = std::move(planning_model), spec = std::move(spec)](const Eigen::VectorXd& x) {
    return mpc_action(model, spec, x);
  };
}

InitialDistribution InitialDistribution::gaussian(Eigen::VectorXd mean, Eigen::VectorXd sigma) {
  InitialDistribution d;
  d.kind = Kind::Gaussian;
  d.mean = std::move(mean);
  d.sigma = std::move(sigma);
  return d;
}

InitialDistribution InitialDistribution::uniform(Box box) {
  InitialDistribution d;
  d.kind = Kind::Uniform;
  d.box = std::move(box);
  return d;
}

InitialDistribution InitialDistribution::truncated_gaussian(Eigen::VectorXd mean, Eigen::VectorXd sigma, Box box) {
  InitialDistribution d;
  d.kind = Kind::TruncatedGaussian;
  d.mean = std::move(mean);
  d.sigma = std::move(sigma);
  d.box = std::move(box);
  return d;
}

InitialDistribution InitialDistribution::fixed(Eigen::VectorXd x0) {
  InitialDistribution d;
  d.kind = Kind::Fixed;
  d.mean = std::move(x0);
  return d;
}

Eigen::VectorXd InitialDistribution::sample(std::uint64_t key) const {
  CounterRng rng(key);
  switch (kind) {
    case Kind::Fixed:
      return mean;
    case Kind::Gaussian: {
      Eigen::VectorXd x(mean.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = mean[i] + sigma[i] * rng.normal();
      return x;
    }
    case Kind::Uniform: {
      Eigen::VectorXd x(box->dim());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(box->lower[i], box->upper[i]);
      return x;
    }
    case Kind::TruncatedGaussian: {
      Eigen::VectorXd x(mean.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double u = rng.uniform();
        // A zero spread pins the component at its (clamped) mean.
        x[i] = sigma[i] > 0.0 ? truncated_normal_quantile(u, mean[i], sigma[i], box->lower[i], box->upper[i])
                              : std::clamp(mean[i], box->lower[i], box->upper[i]);
      }
      return x;
    }
  }
  throw std::logic_error("InitialDistribution: unknown kind");
}

std::string InitialDistribution::describe() const {
  std::ostringstream os;
  auto vec = [&](const Eigen::VectorXd& v) {
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
  };
  switch (kind) {
    case Kind::Fixed: os << "fixed"; vec(mean); break;
    case Kind::Gaussian: os << "gaussian"; vec(mean); vec(sigma); break;
    case Kind::Uniform: os << "uniform"; vec(box->lower); vec(box->upper); break;
    case Kind::TruncatedGaussian:
      os << "truncated_gaussian";
      vec(mean);
      vec(sigma);
      vec(box->lower);
      vec(box->upper);
      break;
  }
  return os.str();
}

std::vector<Trajectory> generate_dataset(const MarkovModel& model, const Policy& expert, int trials, int steps,
                                         const InitialDistribution& init, std::uint64_t seed, int jobs) {
  if (trials < 1 || steps < 1) throw std::invalid_argument("generate_dataset: trials and steps must be >= 1");
  std::vector<Trajectory> out(static_cast<std::size_t>(trials));
  const Box xs = model.state_box();
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    const std::uint64_t trial_seed = derive_seed(seed, i);
    const Eigen::VectorXd x0 = xs.clamp(init.sample(derive_seed(trial_seed, 0x1417)));
    Trajectory traj = simulate(model, expert, x0, steps, trial_seed);
    traj.trial = static_cast<int>(i);
    out[i] = std::move(traj);
  });
  return out;
}

}  // namespace sosioc
