#include "sosioc/markov.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "sosioc/random.hpp"
#include "sosioc/util.hpp"

namespace sosioc {

Eigen::VectorXd MarkovModel::feature_values(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const {
  Eigen::VectorXd v(feature_count());
  for (int i = 0; i < feature_count(); ++i) v[i] = features[i].eval(x, a);
  return v;
}

double MarkovModel::cost(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& a) const {
  return theta.dot(feature_values(x, a));
}

void MarkovModel::validate() const {
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("MarkovModel: empty state or action space");
  if (box.dim() != state_dim + action_dim) throw std::invalid_argument("MarkovModel: box dimension mismatch");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("MarkovModel: discount must lie in (0, 1)");
  if (features.empty()) throw std::invalid_argument("MarkovModel: at least one feature is required");
  if (!dynamics) throw std::invalid_argument("MarkovModel: dynamics missing");
  if (noise && noise->dim() != state_dim) throw std::invalid_argument("MarkovModel: noise dimension mismatch");
  if (state_slack < 0.0) throw std::invalid_argument("MarkovModel: negative state slack");
  // First feature must be the constant one.
  const Eigen::VectorXd c = box.center();
  const Eigen::VectorXd x = c.head(state_dim), a = c.tail(action_dim);
  if (features.front().eval(x, a) != 1.0 || features.front().eval(box.lower.head(state_dim), box.lower.tail(action_dim)) != 1.0)
    throw std::invalid_argument("MarkovModel: the first feature must be the constant 1");
}

Eigen::VectorXd Trajectory::node(Eigen::Index t) const {
  Eigen::VectorXd eta(states.cols() + actions.cols());
  eta << states.row(t).transpose(), actions.row(t).transpose();
  return eta;
}

TransitionExpectation::TransitionExpectation(const MarkovModel& model)
    : dynamics_(model.dynamics), state_dim_(model.state_dim), value_box_(model.value_box()) {
  if (model.noise) rule_ = truncated_normal_rule(*model.noise, model.noise_nodes);
}

Eigen::VectorXd TransitionExpectation::operator()(const Eigen::VectorXd& node, const VectorFunction& r,
                                                  int* clipped) const {
  const Eigen::VectorXd x = node.head(state_dim_);
  const Eigen::VectorXd a = node.tail(node.size() - state_dim_);
  const Eigen::VectorXd mean = dynamics_(x, a);
  int count = 0;
  auto clip = [&](const Eigen::VectorXd& next) {
    if (!value_box_.contains(next, 0.0)) {
      ++count;
      return Eigen::VectorXd(value_box_.clamp(next));
    }
    return next;
  };
  Eigen::VectorXd row;
  if (!rule_) {
    row = r(clip(mean));
  } else {
    row = expectation([&](const Eigen::VectorXd& w) { return r(clip(mean + w)); }, *rule_);
  }
  if (clipped) *clipped += count;
  return row;
}

Eigen::VectorXd qstar_row(const MarkovModel& model, const Eigen::VectorXd& node,
                          const VectorFunction& value_basis, int* clipped) {
  if (!model.box.contains(node)) throw std::out_of_range("qstar_row: node outside K");
  return TransitionExpectation(model)(node, value_basis, clipped);
}

Eigen::VectorXd pstar_row(const MarkovModel& model, const Eigen::VectorXd& node,
                          const VectorFunction& value_basis) {
  if (!model.box.contains(node)) throw std::out_of_range("pstar_row: node outside K");
  return value_basis(model.state_of(node));
}

Trajectory simulate(const MarkovModel& model, const Policy& policy, const Eigen::VectorXd& x0,
                    int steps, std::uint64_t seed, const SimulateOptions& options) {
  const Box xs = model.state_box(), as = model.action_box();
  if (options.clip && !xs.contains(x0)) throw std::out_of_range("simulate: x0 outside the state box");
  Trajectory traj;
  traj.seed = seed;
  traj.states.resize(steps, model.state_dim);
  traj.actions.resize(steps, model.action_dim);
  Eigen::VectorXd x = x0;
  for (int t = 0; t < steps; ++t) {
    Eigen::VectorXd a = policy(x);
    if (options.clip && !as.contains(a, 0.0)) {
      a = as.clamp(a);
      ++traj.clip_count;
    }
    traj.states.row(t) = x.transpose();
    traj.actions.row(t) = a.transpose();
    Eigen::VectorXd next = model.dynamics(x, a);
    if (model.noise)
      next += sample_truncated_normal(*model.noise, seed, static_cast<std::uint64_t>(t) * model.state_dim);
    if (options.clip && !xs.contains(next, 0.0)) {
      next = xs.clamp(next);
      ++traj.clip_count;
    }
    x = next;
  }
  return traj;
}

namespace {

Feature constant_feature() {
  return {"1", [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return 1.0; }};
}

Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  return Box(Eigen::Map<const Eigen::VectorXd>(lo.begin(), static_cast<Eigen::Index>(lo.size())),
             Eigen::Map<const Eigen::VectorXd>(hi.begin(), static_cast<Eigen::Index>(hi.size())));
}

}  // namespace

MarkovModel lqr_model() {
  MarkovModel m;
  m.name = "lqr";
  m.state_dim = 2;
  m.action_dim = 1;
  m.box = make_box({-5.0, -5.0, -5.0}, {5.0, 5.0, 5.0});
  m.dynamics = [](const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    Eigen::VectorXd next(2);
    next[0] = x[0] + 0.1 * x[1] + 0.005 * a[0];
    next[1] = x[1] + 0.1 * a[0];
    return next;
  };
  m.noise = TruncatedNormal(Eigen::Vector2d::Zero(), Eigen::Vector2d::Constant(0.01),
                            make_box({-1.0, -1.0}, {1.0, 1.0}));
  m.discount = 0.99;
  m.features = {constant_feature(),
                {"x1^2", [](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x[0] * x[0]; }},
                {"x2^2", [](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x[1] * x[1]; }},
                {"a^2", [](const Eigen::VectorXd&, const Eigen::VectorXd& a) { return a[0] * a[0]; }}};
  m.state_slack = 0.1;
  return m;
}

MarkovModel temperature_model() {
  constexpr double kLinear = 5e-4, kRadiative = 2.268e-8, kEnv = 290.0;
  MarkovModel m;
  m.name = "temperature";
  m.state_dim = 1;
  m.action_dim = 1;
  m.box = make_box({290.0, 0.0}, {1010.0, 500.0});
  m.dynamics = [](const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    const double t = x[0];
    const double env4 = kEnv * kEnv * kEnv * kEnv;
    Eigen::VectorXd next(1);
    next[0] = t + 0.5 * a[0] - kLinear * (t - kEnv) - kRadiative * (t * t * t * t - env4);
    return next;
  };
  m.noise = TruncatedNormal(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0),
                            make_box({-200.0}, {200.0}));
  m.discount = 0.9;
  m.features = {constant_feature(),
                {"(T/200-3.25)^2",
                 [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
                   const double z = x[0] / 200.0 - 3.25;
                   return z * z;
                 }},
                {"(a/500)^2", [](const Eigen::VectorXd&, const Eigen::VectorXd& a) {
                   const double z = a[0] / 500.0;
                   return z * z;
                 }}};
  m.state_slack = 0.0;
  return m;
}

MarkovModel pendulum_model(const PendulumParams& params) {
  MarkovModel m;
  m.name = "pendulum";
  m.state_dim = 2;
  m.action_dim = 1;
  m.box = make_box({-3.5, -3.5, -3.0}, {3.5, 3.5, 3.0});
  const double sin_gain = params.sin_gain, control_gain = params.control_gain;
  m.dynamics = [sin_gain, control_gain](const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    Eigen::VectorXd next(2);
    next[0] = x[0] + 0.01 * x[1];
    next[1] = 0.999 * x[1] + sin_gain * std::sin(x[0]) + control_gain * std::cos(x[0]) * a[0];
    return next;
  };
  m.noise = params.noise;
  m.discount = 0.9;
  m.features = {constant_feature(),
                {"p^2", [](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x[0] * x[0]; }},
                {"v^2", [](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x[1] * x[1]; }},
                {"u^2", [](const Eigen::VectorXd&, const Eigen::VectorXd& a) { return a[0] * a[0]; }}};
  m.state_slack = 0.0;
  return m;
}

MarkovModel perturbed_pendulum_model() {
  PendulumParams p;
  p.sin_gain = 0.0105;
  p.control_gain = 1.05;
  p.noise = TruncatedNormal(Eigen::Vector2d::Zero(), Eigen::Vector2d::Constant(0.004),
                            make_box({-0.4, -0.4}, {0.4, 0.4}));
  MarkovModel m = pendulum_model(p);
  m.name = "pendulum-perturbed";
  return m;
}

BuiltinModels builtin_models() { return {lqr_model(), temperature_model(), pendulum_model()}; }

MarkovModel model_by_name(const std::string& name) {
  if (name == "lqr") return lqr_model();
  if (name == "temperature") return temperature_model();
  if (name == "pendulum") return pendulum_model();
  if (name == "pendulum-perturbed") return perturbed_pendulum_model();
  throw std::invalid_argument("unknown model '" + name + "'");
}

void write_trajectories_csv(std::ostream& os, const std::vector<Trajectory>& data, int state_dim,
                            int action_dim) {
  os << "trial,t";
  for (int i = 1; i <= state_dim; ++i) os << ",x" << i;
  for (int i = 1; i <= action_dim; ++i) os << ",a" << i;
  os << '\n';
  for (const auto& traj : data) {
    for (Eigen::Index t = 0; t < traj.steps(); ++t) {
      os << traj.trial << ',' << (t + 1);
      for (int i = 0; i < state_dim; ++i) os << ',' << fmt17(traj.states(t, i));
      for (int i = 0; i < action_dim; ++i) os << ',' << fmt17(traj.actions(t, i));
      os << '\n';
    }
  }
}

std::vector<Trajectory> read_trajectories_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("trajectory CSV: missing header");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 4 || cols[0] != "trial" || cols[1] != "t")
    throw std::invalid_argument("trajectory CSV: header must start with trial,t");
  int nx = 0, na = 0;
  for (std::size_t i = 2; i < cols.size(); ++i) {
    if (cols[i] == "x" + std::to_string(nx + 1) && na == 0) ++nx;
    else if (cols[i] == "a" + std::to_string(na + 1)) ++na;
    else throw std::invalid_argument("trajectory CSV: unexpected column '" + cols[i] + "'");
  }
  if (nx == 0 || na == 0) throw std::invalid_argument("trajectory CSV: need state and action columns");

  std::map<int, std::vector<std::vector<double>>> rows;
  std::vector<int> order;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string c;
    std::vector<double> vals;
    while (std::getline(ss, c, ',')) vals.push_back(std::stod(c));
    if (vals.size() != cols.size()) throw std::invalid_argument("trajectory CSV: ragged row");
    const int trial = static_cast<int>(vals[0]);
    if (!rows.count(trial)) order.push_back(trial);
    rows[trial].push_back(std::move(vals));
  }
  std::vector<Trajectory> out;
  for (int trial : order) {
    const auto& r = rows[trial];
    Trajectory traj;
    traj.trial = trial;
    traj.states.resize(static_cast<Eigen::Index>(r.size()), nx);
    traj.actions.resize(static_cast<Eigen::Index>(r.size()), na);
    for (std::size_t t = 0; t < r.size(); ++t) {
      for (int i = 0; i < nx; ++i) traj.states(static_cast<Eigen::Index>(t), i) = r[t][2 + i];
      for (int i = 0; i < na; ++i) traj.actions(static_cast<Eigen::Index>(t), i) = r[t][2 + nx + i];
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace sosioc
