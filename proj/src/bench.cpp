#include "sosioc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include <nlohmann/json.hpp>

#include "sosioc/ioc.hpp"
#include "sosioc/parallel.hpp"
#include "sosioc/random.hpp"
#include "sosioc/util.hpp"

namespace sosioc {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_vec(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument(what + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(what + ": expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

void require_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json box_json(const Box& b) { return json{{"lower", vec_json(b.lower)}, {"upper", vec_json(b.upper)}}; }

Box box_from_json(const json& j, const std::string& where) {
  require_keys(j, {"lower", "upper"}, where);
  return Box(json_vec(j.at("lower"), where + ".lower"), json_vec(j.at("upper"), where + ".upper"));
}

json init_json(const InitialDistribution& d) {
  using K = InitialDistribution::Kind;
  switch (d.kind) {
    case K::Gaussian:
      return json{{"kind", "gaussian"}, {"mean", vec_json(d.mean)}, {"sigma", vec_json(d.sigma)}};
    case K::Uniform:
      return json{{"kind", "uniform"}, {"lower", vec_json(d.box->lower)}, {"upper", vec_json(d.box->upper)}};
    case K::TruncatedGaussian:
      return json{{"kind", "truncated_gaussian"}, {"mean", vec_json(d.mean)}, {"sigma", vec_json(d.sigma)},
                  {"lower", vec_json(d.box->lower)}, {"upper", vec_json(d.box->upper)}};
    case K::Fixed:
      return json{{"kind", "fixed"}, {"point", vec_json(d.mean)}};
  }
  return json{};
}

InitialDistribution init_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw std::invalid_argument("init: object with 'kind' required");
  const std::string kind = j.at("kind").get<std::string>();
  auto box = [&] { return Box(json_vec(j.at("lower"), "init.lower"), json_vec(j.at("upper"), "init.upper")); };
  if (kind == "gaussian") {
    require_keys(j, {"kind", "mean", "sigma"}, "init");
    return InitialDistribution::gaussian(json_vec(j.at("mean"), "init.mean"), json_vec(j.at("sigma"), "init.sigma"));
  }
  if (kind == "uniform") {
    require_keys(j, {"kind", "lower", "upper"}, "init");
    return InitialDistribution::uniform(box());
  }
  if (kind == "truncated_gaussian") {
    require_keys(j, {"kind", "mean", "sigma", "lower", "upper"}, "init");
    return InitialDistribution::truncated_gaussian(json_vec(j.at("mean"), "init.mean"),
                                                   json_vec(j.at("sigma"), "init.sigma"), box());
  }
  if (kind == "fixed") {
    require_keys(j, {"kind", "point"}, "init");
    return InitialDistribution::fixed(json_vec(j.at("point"), "init.point"));
  }
  throw std::invalid_argument("init: unknown kind '" + kind + "'");
}

json solver_json(const SolverConfig& s) {
  return json{{"tol", s.tol},           {"max_iter", s.max_iter},
              {"eta", s.eta},           {"center_eta", s.center_eta},
              {"max_correctors", s.max_correctors}, {"shrink", s.shrink},
              {"max_backtracks", s.max_backtracks}, {"rank_tol", s.rank_tol},
              {"balance_rhs", s.balance_rhs}};
}

SolverConfig solver_from_json(const json& j) {
  require_keys(j, {"tol", "max_iter", "eta", "center_eta", "max_correctors", "shrink", "max_backtracks", "rank_tol",
                   "balance_rhs"},
               "solver");
  SolverConfig s;
  read_if(j, "tol", s.tol);
  read_if(j, "max_iter", s.max_iter);
  read_if(j, "eta", s.eta);
  read_if(j, "center_eta", s.center_eta);
  read_if(j, "max_correctors", s.max_correctors);
  read_if(j, "shrink", s.shrink);
  read_if(j, "max_backtracks", s.max_backtracks);
  read_if(j, "rank_tol", s.rank_tol);
  read_if(j, "balance_rhs", s.balance_rhs);
  return s;
}

// Per-row training seeds are derived from the experiment seed, so the
// config carries no training seed of its own.
json net_json(const NetConfig& n) {
  const TrainConfig& t = n.train;
  return json{{"hidden", n.hidden}, {"step", t.step},   {"batch", t.batch}, {"epochs", t.epochs},
              {"beta1", t.beta1},   {"beta2", t.beta2}, {"eps", t.eps},     {"psi_weight", t.psi_weight},
              {"final_step_fraction", t.final_step_fraction}};
}

NetConfig net_from_json(const json& j, NetConfig n, const std::string& where) {
  require_keys(j, {"hidden", "step", "batch", "epochs", "beta1", "beta2", "eps", "psi_weight", "final_step_fraction"}, where);
  read_if(j, "hidden", n.hidden);
  read_if(j, "step", n.train.step);
  read_if(j, "batch", n.train.batch);
  read_if(j, "epochs", n.train.epochs);
  read_if(j, "beta1", n.train.beta1);
  read_if(j, "beta2", n.train.beta2);
  read_if(j, "eps", n.train.eps);
  read_if(j, "psi_weight", n.train.psi_weight);
  read_if(j, "final_step_fraction", n.train.final_step_fraction);
  return n;
}

json config_json(const ExperimentConfig& c) {
  json degrees = json::array();
  for (auto [p, v] : c.degrees) degrees.push_back(json::array({p, v}));
  json j{{"schema_version", ExperimentConfig::kSchemaVersion},
         {"experiment", c.experiment},
         {"sweep", c.sweep},
         {"seed", c.seed},
         {"systems", c.systems},
         {"degrees", degrees},
         {"trials", c.trials},
         {"steps", c.steps},
         {"data_sizes", c.data_sizes},
         {"init", init_json(c.init)},
         {"box", c.box ? box_json(*c.box) : json(nullptr)},
         {"state_slack", c.state_slack ? json(*c.state_slack) : json(nullptr)},
         {"true_cost", vec_json(c.true_cost)},
         {"solver", solver_json(c.solver)},
         {"candidate_density", c.candidate_density},
         {"psi_grid_points", c.psi_grid_points},
         {"mpc", json{{"horizon", c.mpc_horizon}, {"alpha", c.mpc_alpha}}},
         {"reconstruct", c.reconstruct},
         {"train_fraction", c.train_fraction},
         {"policy_net", net_json(c.policy_net)},
         {"bc_net", net_json(c.bc_net)},
         {"test_start", vec_json(c.test_start)},
         {"test_steps", c.test_steps},
         {"histogram_bins", c.histogram_bins},
         {"output_dir", c.output_dir},
         {"jobs", c.jobs}};
  return j;
}

Box square(double half) { return Box(Eigen::Vector2d(-half, -half), Eigen::Vector2d(half, half)); }

bool is_pendulum(const std::string& e) { return e == "pendulum" || e == "pendulum-robustness"; }

MarkovModel base_model(const std::string& experiment) {
  if (experiment == "lqr") return lqr_model();
  if (experiment == "temperature") return temperature_model();
  return pendulum_model();
}

void apply_overrides(MarkovModel& m, const ExperimentConfig& c) {
  if (c.box) m.box = *c.box;
  if (c.state_slack) m.state_slack = *c.state_slack;
}

MarkovModel plant_model(const ExperimentConfig& c) {
  if (c.experiment != "pendulum-robustness") return experiment_model(c);
  MarkovModel m = perturbed_pendulum_model();
  apply_overrides(m, c);
  return m;
}

std::vector<int> widths(const MarkovModel& m, const std::vector<int>& hidden) {
  std::vector<int> w{m.state_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(m.action_dim);
  return w;
}

MpcSpec mpc_spec(const ExperimentConfig& c, const MarkovModel& m, const Eigen::VectorXd& theta) {
  MpcSpec s;
  s.horizon = c.mpc_horizon;
  s.alpha = c.mpc_alpha;
  s.cost = feature_cost(m, theta);
  return s;
}

Policy expert_policy(const ExperimentConfig& c, const MarkovModel& plant, const Eigen::VectorXd& theta) {
  if (c.experiment == "lqr") {
    const Eigen::MatrixXd K = riccati_gain(lqr_experiment_spec(theta[1], theta[2], theta[3])).K;
    return [K](const Eigen::VectorXd& x) { return Eigen::VectorXd(-K * x); };
  }
  return mpc_policy(plant, mpc_spec(c, plant, theta));
}

int per_axis_points(int points, int dim) {
  const double root = std::pow(static_cast<double>(points), 1.0 / dim);
  return std::max(2, static_cast<int>(std::ceil(root - 1e-9)));
}

struct Fit {
  ErrorRow row;
  std::optional<CostEstimate> estimate;
  std::shared_ptr<const InterpolationGrid> grid;
};

Fit fit_cost(const ExperimentConfig& c, const MarkovModel& m, const std::vector<Trajectory>& data, int system,
             std::pair<int, int> degree, const Eigen::VectorXd& truth) {
  Fit f;
  ErrorRow& r = f.row;
  r.system = system;
  r.d_psi = degree.first;
  r.d_V = degree.second;
  r.trials = static_cast<int>(data.size());
  r.steps = c.steps;
  r.theta_true = truth;
  r.error = r.objective = r.psi_min = r.psi_max = kNaN;
  try {
    AssembleOptions ao;
    ao.candidate_density = c.candidate_density;
    ao.grid = cached_fekete_grid(m.box, 2 * degree.first, c.candidate_density);
    const IocProblem problem = assemble(m, degree.first, degree.second, data, ao);
    EstimateOptions eo;
    eo.solver = c.solver;
    eo.psi_grid_per_axis = per_axis_points(c.psi_grid_points, problem.grid->dim());
    CostEstimate est = estimate(problem, eo);
    r.status = to_string(est.status);
    r.ok = est.status == SolveStatus::Optimal;
    r.iterations = est.iterations;
    r.message = est.message;
    if (est.theta_ell.size() == truth.size()) {
      r.theta_est = est.theta_ell;
      r.error = normalized_error(est.theta_ell, truth);
      r.objective = est.objective;
      r.psi_min = est.psi_min;
      r.psi_max = est.psi_max;
    }
    f.grid = problem.grid;
    f.estimate = std::move(est);
  } catch (const std::exception& e) {
    r.status = "error";
    r.ok = false;
    r.message = e.what();
  }
  return f;
}

struct SystemResult {
  std::vector<ErrorRow> rows;
  std::vector<SmapeRow> smape;
  std::optional<RobustnessRow> robustness;
  std::vector<Trajectory> test_runs;  // true-cost MPC, estimated-cost MPC, behavior cloning
  double seconds = 0.0;
  std::string failure;  // dataset-level failure
};

TrainConfig seeded(const TrainConfig& t, std::uint64_t seed) {
  TrainConfig out = t;
  out.seed = seed;
  return out;
}

void run_robustness(const ExperimentConfig& c, const MarkovModel& nominal, const SystemData& sd, int s,
                    SystemResult& out) {
  const std::uint64_t key = derive_seed(c.seed, static_cast<std::uint64_t>(s));
  Fit f = fit_cost(c, nominal, sd.data, s, c.degrees.front(), sd.theta_true);
  out.rows.push_back(f.row);
  RobustnessRow rr;
  rr.rep = s;
  rr.ok = f.row.ok;
  rr.status = f.row.status;
  rr.error = f.row.error;
  rr.deviation_estimated = rr.deviation_bc = kNaN;
  if (!f.row.ok) {
    out.robustness = rr;
    return;
  }
  const MlpPolicy net0 = MlpPolicy::create(widths(nominal, c.bc_net.hidden), nominal.state_box(), nominal.action_box(),
                                           derive_seed(key, 3));
  const MlpPolicy bc = behavior_clone(sd.data, net0, seeded(c.bc_net.train, derive_seed(key, 4)));

  Eigen::VectorXd theta_hat = f.estimate->theta_ell;
  theta_hat[0] = 0.0;  // a constant offset does not change the plan
  const MarkovModel plant = plant_model(c);
  const std::uint64_t noise = derive_seed(key, 7);
  out.test_runs.push_back(
      simulate(plant, mpc_policy(nominal, mpc_spec(c, nominal, sd.theta_true)), c.test_start, c.test_steps, noise));
  out.test_runs.push_back(
      simulate(plant, mpc_policy(nominal, mpc_spec(c, nominal, theta_hat)), c.test_start, c.test_steps, noise));
  out.test_runs.push_back(simulate(plant, bc.as_policy(), c.test_start, c.test_steps, noise));
  const Eigen::VectorXd p_true = out.test_runs[0].states.col(0);
  rr.deviation_estimated = (out.test_runs[1].states.col(0) - p_true).squaredNorm();
  rr.deviation_bc = (out.test_runs[2].states.col(0) - p_true).squaredNorm();
  out.robustness = rr;
}

void run_policy_sweep(const ExperimentConfig& c, const MarkovModel& m, const SystemData& sd, int s,
                      SystemResult& out) {
  const std::uint64_t key = derive_seed(c.seed, static_cast<std::uint64_t>(s));
  auto [train, test] = split_by_trial(sd.data, derive_seed(key, 2), c.train_fraction);
  const SampleSet test_set = flatten(test);
  const MlpPolicy bc0 =
      MlpPolicy::create(widths(m, c.bc_net.hidden), m.state_box(), m.action_box(), derive_seed(key, 3));
  const MlpPolicy bc = behavior_clone(train, bc0, seeded(c.bc_net.train, derive_seed(key, 4)));
  out.smape.push_back({s, "behavior_clone", 0, smape(bc.as_policy(), test_set)});

  // One initialization and one shuffle stream for every degree: the
  // comparison across degrees is paired.
  const MlpPolicy net0 =
      MlpPolicy::create(widths(m, c.policy_net.hidden), m.state_box(), m.action_box(), derive_seed(key, 5));
  const TrainConfig cfg = seeded(c.policy_net.train, derive_seed(key, 6));
  for (const auto& degree : c.degrees) {
    Fit f = fit_cost(c, m, train, s, degree, sd.theta_true);
    if (f.row.ok) {
      try {
        const MlpPolicy rc = reconstruct_policy(*f.estimate, f.grid, train, net0, cfg);
        f.row.smape = smape(rc.as_policy(), test_set);
        out.smape.push_back({s, "reconstructed", degree.first, f.row.smape});
      } catch (const std::exception& e) {
        f.row.ok = false;
        f.row.status = "error";
        f.row.message = std::string("reconstruct: ") + e.what();
      }
    }
    out.rows.push_back(f.row);
  }
}

SystemResult run_system(const ExperimentConfig& c, const MarkovModel& m, int s) {
  const auto t0 = Clock::now();
  SystemResult out;
  try {
    const SystemData sd = experiment_dataset(c, s);
    if (c.experiment == "pendulum-robustness") {
      run_robustness(c, m, sd, s, out);
    } else if (c.reconstruct) {
      run_policy_sweep(c, m, sd, s, out);
    } else if (c.sweep == "data_size") {
      for (const auto& degree : c.degrees)
        for (int M : c.data_sizes) {
          const std::vector<Trajectory> head(sd.data.begin(), sd.data.begin() + M);
          out.rows.push_back(fit_cost(c, m, head, s, degree, sd.theta_true).row);
        }
    } else {
      for (const auto& degree : c.degrees) out.rows.push_back(fit_cost(c, m, sd.data, s, degree, sd.theta_true).row);
    }
  } catch (const std::exception& e) {
    out.failure = e.what();
  }
  out.seconds = seconds_since(t0);
  return out;
}

std::string join(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt17(v[i]);
  return s;
}

std::string header(const std::string& fingerprint) { return "# fingerprint=" + fingerprint + "\n"; }

}  // namespace

void ExperimentConfig::validate() const {
  static const std::vector<std::string> kExperiments{"lqr", "temperature", "pendulum", "pendulum-robustness"};
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ExperimentConfig: " + msg); };
  if (std::find(kExperiments.begin(), kExperiments.end(), experiment) == kExperiments.end())
    fail("unknown experiment '" + experiment + "'");
  if (sweep != "degree" && sweep != "data_size") fail("sweep must be 'degree' or 'data_size'");
  if (sweep == "data_size" && experiment != "pendulum") fail("the data_size sweep is defined for the pendulum only");
  if (systems < 1) fail("systems must be positive");
  if (degrees.empty()) fail("degrees must be nonempty");
  for (auto [p, v] : degrees)
    if (p < 1 || v < 1) fail("degrees need d_psi >= 1 and d_V >= 1");
  if (trials < 1 || steps < 1) fail("trials and steps must be positive");
  if (sweep == "data_size") {
    if (data_sizes.empty()) fail("data_size sweep needs data_sizes");
    for (int M : data_sizes)
      if (M < 1 || M > trials) fail("data_sizes must lie in [1, trials]");
  }
  if (reconstruct && (experiment != "pendulum" || sweep != "degree"))
    fail("reconstruct applies to the pendulum degree sweep");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (candidate_density < 1.0) fail("candidate_density must be at least 1");
  if (psi_grid_points < 2) fail("psi_grid_points must be at least 2");
  if (mpc_horizon < 1 || !(mpc_alpha > 0.0 && mpc_alpha <= 1.0)) fail("mpc needs horizon >= 1 and alpha in (0, 1]");
  if (histogram_bins < 1) fail("histogram_bins must be positive");
  if (jobs < 1) fail("jobs must be positive");
  for (const NetConfig* n : {&policy_net, &bc_net}) {
    if (n->hidden.empty()) fail("networks need at least one hidden layer");
    for (int w : n->hidden)
      if (w < 1) fail("hidden widths must be positive");
    if (!(n->train.step > 0.0) || n->train.batch < 1 || n->train.epochs < 1 ||
        !(n->train.final_step_fraction > 0.0 && n->train.final_step_fraction <= 1.0))
      fail("invalid training settings");
  }

  const MarkovModel m = experiment_model(*this);
  m.validate();
  const Eigen::Index n = m.state_dim;
  using K = InitialDistribution::Kind;
  switch (init.kind) {
    case K::Gaussian:
      if (init.mean.size() != n || init.sigma.size() != n || (init.sigma.array() <= 0.0).any())
        fail("gaussian init needs mean and positive sigma of the state dimension");
      break;
    case K::Uniform:
      if (!init.box || init.box->dim() != n) fail("uniform init needs a box of the state dimension");
      break;
    case K::TruncatedGaussian:
      if (init.mean.size() != n || init.sigma.size() != n || (init.sigma.array() < 0.0).any() || !init.box ||
          init.box->dim() != n)
        fail("truncated_gaussian init needs mean, sigma >= 0 and a box of the state dimension");
      break;
    case K::Fixed:
      if (init.mean.size() != n) fail("fixed init needs a point of the state dimension");
      break;
  }
  if (true_cost.size() != 0 && true_cost.size() != m.feature_count())
    fail("true_cost must have one entry per feature");
  if (is_pendulum(experiment) && true_cost.size() == 0) fail("pendulum experiments need true_cost");
  if (experiment == "pendulum-robustness") {
    if (test_start.size() != n) fail("test_start must have the state dimension");
    if (test_steps < 1) fail("test_steps must be positive");
  }
}

std::string ExperimentConfig::canonical_json() const {
  json j = config_json(*this);
  j.erase("output_dir");
  j.erase("jobs");
  return j.dump();
}

std::string ExperimentConfig::fingerprint() const { return hex64(fnv1a64(canonical_json())); }

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

ExperimentConfig parse_config(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    require_keys(j,
                 {"schema_version", "experiment", "sweep", "seed", "systems", "degrees", "trials", "steps",
                  "data_sizes", "init", "box", "state_slack", "true_cost", "solver", "candidate_density",
                  "psi_grid_points", "mpc", "reconstruct", "train_fraction", "policy_net", "bc_net", "test_start",
                  "test_steps", "histogram_bins", "output_dir", "jobs"},
                 "config");
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != ExperimentConfig::kSchemaVersion)
      throw std::invalid_argument("config: schema_version must be " +
                                  std::to_string(ExperimentConfig::kSchemaVersion));
    if (!j.contains("experiment")) throw std::invalid_argument("config: 'experiment' is required");
    // Unset keys fall back to the preset of the same experiment.
    const std::string experiment = j.at("experiment").get<std::string>();
    ExperimentConfig c = preset_config(experiment);
    if (j.contains("sweep") && experiment == "pendulum" && j.at("sweep").get<std::string>() == "degree")
      c = preset_config("pendulum-degree");
    read_if(j, "sweep", c.sweep);
    read_if(j, "seed", c.seed);
    read_if(j, "systems", c.systems);
    if (j.contains("degrees")) {
      c.degrees.clear();
      for (const json& d : j.at("degrees")) {
        if (!d.is_array() || d.size() != 2) throw std::invalid_argument("config: degrees are [d_psi, d_V] pairs");
        c.degrees.emplace_back(d[0].get<int>(), d[1].get<int>());
      }
    }
    read_if(j, "trials", c.trials);
    read_if(j, "steps", c.steps);
    read_if(j, "data_sizes", c.data_sizes);
    if (j.contains("init")) c.init = init_from_json(j.at("init"));
    if (j.contains("box")) {
      if (j.at("box").is_null())
        c.box.reset();
      else
        c.box = box_from_json(j.at("box"), "box");
    }
    if (j.contains("state_slack")) {
      if (j.at("state_slack").is_null())
        c.state_slack.reset();
      else
        c.state_slack = j.at("state_slack").get<double>();
    }
    if (j.contains("true_cost")) c.true_cost = json_vec(j.at("true_cost"), "true_cost");
    if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"));
    read_if(j, "candidate_density", c.candidate_density);
    read_if(j, "psi_grid_points", c.psi_grid_points);
    if (j.contains("mpc")) {
      require_keys(j.at("mpc"), {"horizon", "alpha"}, "mpc");
      read_if(j.at("mpc"), "horizon", c.mpc_horizon);
      read_if(j.at("mpc"), "alpha", c.mpc_alpha);
    }
    read_if(j, "reconstruct", c.reconstruct);
    read_if(j, "train_fraction", c.train_fraction);
    if (j.contains("policy_net")) c.policy_net = net_from_json(j.at("policy_net"), c.policy_net, "policy_net");
    if (j.contains("bc_net")) c.bc_net = net_from_json(j.at("bc_net"), c.bc_net, "bc_net");
    if (j.contains("test_start")) c.test_start = json_vec(j.at("test_start"), "test_start");
    read_if(j, "test_steps", c.test_steps);
    read_if(j, "histogram_bins", c.histogram_bins);
    read_if(j, "output_dir", c.output_dir);
    read_if(j, "jobs", c.jobs);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> preset_names() {
  return {"lqr", "temperature", "pendulum", "pendulum-degree", "pendulum-robustness"};
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  if (name == "lqr") {
    c.experiment = "lqr";
    c.systems = 32;
    c.degrees = {{3, 2}};
    c.trials = 128;
    c.steps = 4;
    c.init = InitialDistribution::gaussian(Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones());
  } else if (name == "temperature") {
    c.experiment = "temperature";
    c.systems = 16;
    c.degrees = {{2, 1}, {3, 2}, {4, 3}};
    c.trials = 32;
    c.steps = 2;
    c.init = InitialDistribution::uniform(temperature_model().state_box());
  } else if (name == "pendulum") {
    c.experiment = "pendulum";
    c.sweep = "data_size";
    c.systems = 64;
    c.degrees = {{3, 2}};
    c.trials = 256;
    c.steps = 1;
    c.data_sizes = {16, 64, 128, 256};
    c.init = InitialDistribution::uniform(square(1.0));
    c.true_cost = Eigen::Vector4d(0.0, 100.0, 10.0, 1.0);
  } else if (name == "pendulum-degree") {
    c.experiment = "pendulum";
    c.sweep = "degree";
    c.systems = 5;
    c.degrees = {{3, 2}, {5, 4}};
    c.trials = 4096;
    c.steps = 4;
    c.init = InitialDistribution::truncated_gaussian(Eigen::Vector2d::Zero(), Eigen::Vector2d(0.314, 0.0), square(1.0));
    c.true_cost = Eigen::Vector4d(0.0, 100.0, 10.0, 1.0);
    c.reconstruct = true;
    c.policy_net.train.batch = 256;
    c.policy_net.train.epochs = 60;
    c.policy_net.train.psi_weight = 10.0;
    c.bc_net.train.batch = 256;
    c.bc_net.train.epochs = 60;
  } else if (name == "pendulum-robustness") {
    c.experiment = "pendulum-robustness";
    c.systems = 5;
    c.degrees = {{3, 2}};
    c.trials = 16;
    c.steps = 256;
    c.init = InitialDistribution::uniform(square(2.0));
    c.true_cost = Eigen::Vector4d(0.0, 100.0, 10.0, 1.0);
    c.test_start = Eigen::Vector2d(3.0, 0.0);
    c.test_steps = 256;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  c.output_dir = "out/" + name;
  return c;
}

MarkovModel experiment_model(const ExperimentConfig& config) {
  MarkovModel m = base_model(config.experiment);
  apply_overrides(m, config);
  return m;
}

SystemData experiment_dataset(const ExperimentConfig& c, int system) {
  const std::uint64_t key = derive_seed(c.seed, static_cast<std::uint64_t>(system));
  const MarkovModel plant = plant_model(c);
  SystemData sd;
  if (c.true_cost.size() > 0) {
    sd.theta_true = c.true_cost;
  } else {
    // Non-constant weights ~ U(0, 1], normalized; the constant weight is 0.
    CounterRng rng(derive_seed(key, 0));
    Eigen::VectorXd q(plant.feature_count() - 1);
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = 1.0 - rng.uniform();
    sd.theta_true = Eigen::VectorXd::Zero(plant.feature_count());
    sd.theta_true.tail(q.size()) = q.normalized();
  }
  sd.data = generate_dataset(plant, expert_policy(c, plant, sd.theta_true), c.trials, c.steps, c.init,
                             derive_seed(key, 1));
  return sd;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double h = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<HistogramBin> central_histogram(std::vector<double> values, int bins, double keep) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty() || bins < 1) return {};
  const double tail = 0.5 * (1.0 - keep);
  const double lo = quantile(values, tail), hi = quantile(values, 1.0 - tail);
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    out[b].lower = lo + b * width;
    out[b].upper = b + 1 == bins ? hi : lo + (b + 1) * width;
  }
  for (double v : values) {
    if (v < lo || v > hi) continue;
    int b = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
    out[std::min(b, bins - 1)].count += 1;
  }
  return out;
}

RunReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  const MarkovModel model = experiment_model(config);
  const std::string fp = config.fingerprint();

  std::vector<SystemResult> results(static_cast<std::size_t>(config.systems));
  parallel_for(results.size(), config.jobs,
               [&](std::size_t s) { results[s] = run_system(config, model, static_cast<int>(s)); });

  RunReport report;
  report.experiment = config.experiment;
  report.fingerprint = fp;
  report.all_ok = true;
  for (const SystemResult& r : results) {
    if (!r.failure.empty()) report.all_ok = false;
    for (const ErrorRow& row : r.rows) {
      report.errors.push_back(row);
      report.all_ok = report.all_ok && row.ok;
    }
    report.smape.insert(report.smape.end(), r.smape.begin(), r.smape.end());
    if (r.robustness) {
      report.robustness.push_back(*r.robustness);
      report.all_ok = report.all_ok && r.robustness->ok;
    }
  }

  // Curves and histograms over the successful rows, one group per (d_psi, x).
  const bool by_size = config.sweep == "data_size";
  std::vector<std::pair<int, int>> groups;
  for (const auto& degree : config.degrees) {
    if (by_size)
      for (int M : config.data_sizes) groups.emplace_back(degree.first, M);
    else
      groups.emplace_back(degree.first, degree.first);
  }
  for (auto [d_psi, x] : groups) {
    std::vector<double> errs;
    for (const ErrorRow& row : report.errors)
      if (row.ok && row.d_psi == d_psi && (!by_size || row.trials == x)) errs.push_back(row.error);
    CurvePoint p;
    p.d_psi = d_psi;
    p.x = x;
    p.count = static_cast<int>(errs.size());
    p.median = quantile(errs, 0.5);
    p.p90 = quantile(errs, 0.9);
    p.mean = kNaN;
    if (!errs.empty()) {
      CompensatedSum<double> acc(1);
      for (double e : errs) acc.add(Eigen::Matrix<double, 1, 1>(e));
      p.mean = acc.value()[0] / static_cast<double>(errs.size());
    }
    report.curve.push_back(p);
    for (HistogramBin b : central_histogram(errs, config.histogram_bins)) {
      b.d_psi = d_psi;
      b.trials = by_size ? x : config.trials;
      report.histogram.push_back(b);
    }
  }

  // Files. Timings live only in the manifest so the CSVs are reproducible.
  namespace fs = std::filesystem;
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  json files = json::array();
  auto emit = [&](const std::string& name, const std::string& body) {
    const std::string text = header(fp) + body;
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    files.push_back(json{{"name", name}, {"fnv1a64", hex64(fnv1a64(text))}, {"bytes", text.size()}});
    report.files.push_back((dir / name).string());
  };

  std::ostringstream os;
  os << "system,d_psi,d_V,trials,steps,status,error,objective,psi_min,psi_max,iterations,smape,theta_true,theta_est\n";
  for (const ErrorRow& r : report.errors) {
    os << r.system << ',' << r.d_psi << ',' << r.d_V << ',' << r.trials << ',' << r.steps << ',' << r.status << ','
       << fmt17(r.error) << ',' << fmt17(r.objective) << ',' << fmt17(r.psi_min) << ',' << fmt17(r.psi_max) << ','
       << r.iterations << ',' << (r.smape >= 0.0 ? fmt17(r.smape) : "") << ',' << join(r.theta_true) << ','
       << join(r.theta_est) << '\n';
  }
  emit("errors.csv", os.str());

  os.str("");
  os << "sweep,d_psi,x,count,median,p90,mean\n";
  for (const CurvePoint& p : report.curve)
    os << config.sweep << ',' << p.d_psi << ',' << p.x << ',' << p.count << ',' << fmt17(p.median) << ','
       << fmt17(p.p90) << ',' << fmt17(p.mean) << '\n';
  emit("curves.csv", os.str());

  os.str("");
  os << "d_psi,trials,bin,lower,upper,count\n";
  {
    int bin = 0, last_d = -1, last_m = -1;
    for (const HistogramBin& b : report.histogram) {
      if (b.d_psi != last_d || b.trials != last_m) bin = 0;
      last_d = b.d_psi;
      last_m = b.trials;
      os << b.d_psi << ',' << b.trials << ',' << bin++ << ',' << fmt17(b.lower) << ',' << fmt17(b.upper) << ','
         << b.count << '\n';
    }
  }
  emit("histogram.csv", os.str());

  if (config.reconstruct) {
    os.str("");
    os << "system,method,d_psi,smape\n";
    for (const SmapeRow& r : report.smape)
      os << r.system << ',' << r.method << ',' << r.d_psi << ',' << fmt17(r.smape) << '\n';
    emit("smape.csv", os.str());
  }

  if (config.experiment == "pendulum-robustness") {
    os.str("");
    os << "rep,status,error,deviation_estimated,deviation_bc,estimated_better\n";
    for (const RobustnessRow& r : report.robustness)
      os << r.rep << ',' << r.status << ',' << fmt17(r.error) << ',' << fmt17(r.deviation_estimated) << ','
         << fmt17(r.deviation_bc) << ',' << (r.deviation_estimated < r.deviation_bc ? 1 : 0) << '\n';
    emit("robustness.csv", os.str());

    static const char* kControllers[] = {"true_mpc", "estimated_mpc", "behavior_clone"};
    os.str("");
    os << "rep,t,controller,p,v,u\n";
    for (std::size_t s = 0; s < results.size(); ++s) {
      const auto& runs = results[s].test_runs;
      for (std::size_t k = 0; k < runs.size(); ++k)
        for (Eigen::Index t = 0; t < runs[k].steps(); ++t)
          os << s << ',' << t << ',' << kControllers[k] << ',' << fmt17(runs[k].states(t, 0)) << ','
             << fmt17(runs[k].states(t, 1)) << ',' << fmt17(runs[k].actions(t, 0)) << '\n';
    }
    emit("trajectories.csv", os.str());
  }

  report.seconds = seconds_since(t0);
  json timings = json::array();
  json failures = json::array();
  for (std::size_t s = 0; s < results.size(); ++s) {
    timings.push_back(json{{"system", s}, {"seconds", results[s].seconds}});
    if (!results[s].failure.empty()) failures.push_back(json{{"system", s}, {"message", results[s].failure}});
    for (const ErrorRow& r : results[s].rows)
      if (!r.ok)
        failures.push_back(json{{"system", s}, {"d_psi", r.d_psi}, {"trials", r.trials}, {"status", r.status},
                                {"message", r.message}});
  }
  const json manifest{{"schema_version", 1},       {"fingerprint", fp},          {"experiment", config.experiment},
                      {"config", config_json(config)}, {"files", files},          {"all_ok", report.all_ok},
                      {"seconds", report.seconds}, {"system_seconds", timings}, {"failures", failures}};
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  report.files.push_back((dir / "manifest.json").string());
  return report;
}

}  // namespace sosioc
