// sosioc: data generation, cost estimation, policy reconstruction and the
// benchmark sweeps from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sosioc/bench.hpp"
#include "sosioc/ioc.hpp"
#include "sosioc/util.hpp"

namespace fs = std::filesystem;
using namespace sosioc;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int jobs = 0;
  std::string degrees;
  int system = 0;
};

std::vector<std::pair<int, int>> parse_degrees(const std::string& text) {
  // "3,2" or "2,1;3,2;4,3"
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("--degrees expects d_psi,d_V pairs separated by ';'");
    out.emplace_back(std::stoi(item.substr(0, comma)), std::stoi(item.substr(comma + 1)));
  }
  if (out.empty()) throw std::invalid_argument("--degrees is empty");
  return out;
}

ExperimentConfig resolve(const Common& c, const std::string& fallback_preset) {
  ExperimentConfig cfg;
  if (!c.config.empty())
    cfg = load_config(c.config);
  else
    cfg = preset_config(c.preset.empty() ? fallback_preset : c.preset);
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.jobs > 0) cfg.jobs = c.jobs;
  if (!c.degrees.empty()) cfg.degrees = parse_degrees(c.degrees);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_preset) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  if (with_preset) cmd->add_option("--preset", c.preset, "Preset used when no --config is given");
  cmd->add_option("--seed", c.seed, "Override the experiment seed")->each([&](const std::string&) { c.seed_set = true; });
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--degrees", c.degrees, "Degree pairs, e.g. \"3,2\" or \"2,1;3,2\"");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

int gen_data(const Common& c) {
  const ExperimentConfig cfg = resolve(c, "lqr");
  const MarkovModel plant = cfg.experiment == "pendulum-robustness" ? perturbed_pendulum_model() : experiment_model(cfg);
  const SystemData sd = experiment_dataset(cfg, c.system);
  std::ostringstream os;
  write_trajectories_csv(os, sd.data, plant.state_dim, plant.action_dim);
  const fs::path dir(cfg.output_dir);
  write_text(dir / "data.csv", os.str());
  std::ostringstream th;
  th << "feature,theta\n";
  for (int i = 0; i < plant.feature_count(); ++i) th << plant.features[i].name << ',' << fmt17(sd.theta_true[i]) << '\n';
  write_text(dir / "theta_true.csv", th.str());
  std::cout << "wrote " << sd.data.size() << " trials to " << (dir / "data.csv").string() << '\n';
  return 0;
}

int estimate_cmd(const Common& c, const std::string& data_path, const std::string& model_name) {
  ExperimentConfig cfg = resolve(c, "lqr");
  MarkovModel model = model_name.empty() ? experiment_model(cfg) : model_by_name(model_name);
  std::ifstream in(data_path);
  if (!in) throw std::runtime_error("cannot open " + data_path);
  const auto data = read_trajectories_csv(in);
  const auto [d_psi, d_V] = cfg.degrees.front();
  AssembleOptions ao;
  ao.candidate_density = cfg.candidate_density;
  const IocProblem problem = assemble(model, d_psi, d_V, data, ao);
  EstimateOptions eo;
  eo.solver = cfg.solver;
  const CostEstimate est = estimate(problem, eo);
  const fs::path dir(cfg.output_dir);
  std::ostringstream log;
  write_iteration_log(log, est.log);
  write_text(dir / "solver_log.csv", log.str());
  write_text(dir / "estimate.json", estimate_report_json(est, problem, (dir / "solver_log.csv").string()));
  std::cout << "status " << to_string(est.status) << ", theta_ell";
  for (Eigen::Index i = 0; i < est.theta_ell.size(); ++i) std::cout << ' ' << est.theta_ell[i];
  std::cout << '\n';
  return est.status == SolveStatus::Optimal ? 0 : 1;
}

int reconstruct_cmd(const Common& c, const std::string& data_path, const std::string& model_name) {
  ExperimentConfig cfg = resolve(c, "pendulum-degree");
  MarkovModel model = model_name.empty() ? experiment_model(cfg) : model_by_name(model_name);
  std::vector<Trajectory> data;
  if (data_path.empty()) {
    data = experiment_dataset(cfg, c.system).data;
  } else {
    std::ifstream in(data_path);
    if (!in) throw std::runtime_error("cannot open " + data_path);
    data = read_trajectories_csv(in);
  }
  auto [train, test] = split_by_trial(data, cfg.seed, cfg.train_fraction);
  const auto [d_psi, d_V] = cfg.degrees.front();
  AssembleOptions ao;
  ao.candidate_density = cfg.candidate_density;
  const IocProblem problem = assemble(model, d_psi, d_V, train, ao);
  EstimateOptions eo;
  eo.solver = cfg.solver;
  const CostEstimate est = estimate(problem, eo);
  if (est.status != SolveStatus::Optimal) {
    std::cerr << "estimate not optimal: " << to_string(est.status) << " " << est.message << '\n';
    return 1;
  }
  std::vector<int> widths{model.state_dim};
  widths.insert(widths.end(), cfg.policy_net.hidden.begin(), cfg.policy_net.hidden.end());
  widths.push_back(model.action_dim);
  const MlpPolicy net0 = MlpPolicy::create(widths, model.state_box(), model.action_box(), cfg.seed);
  TrainConfig tc = cfg.policy_net.train;
  tc.seed = cfg.seed;
  const MlpPolicy net = reconstruct_policy(est, problem.grid, train, net0, tc);
  const double e = smape(net.as_policy(), flatten(test), cfg.jobs);
  const fs::path dir(cfg.output_dir);
  std::ostringstream pj;
  write_policy_json(pj, net);
  write_text(dir / "policy.json", pj.str());
  write_text(dir / "smape.csv", "d_psi,d_V,test_samples,smape\n" + std::to_string(d_psi) + "," + std::to_string(d_V) +
                                    "," + std::to_string(flatten(test).size()) + "," + fmt17(e) + "\n");
  std::cout << "smape " << e << '\n';
  return 0;
}

int bench_cmd(const Common& c, const std::string& name) {
  Common cc = c;
  if (cc.config.empty()) cc.preset = name;
  const ExperimentConfig cfg = resolve(cc, name);
  std::cerr << "bench " << name << " fingerprint " << cfg.fingerprint() << " -> " << cfg.output_dir << '\n';
  const RunReport report = run_experiment(cfg);
  for (const CurvePoint& p : report.curve)
    std::cout << cfg.sweep << " d_psi=" << p.d_psi << " x=" << p.x << " n=" << p.count << " median=" << p.median
              << " p90=" << p.p90 << '\n';
  for (const RobustnessRow& r : report.robustness)
    std::cout << "rep " << r.rep << " deviation estimated=" << r.deviation_estimated << " bc=" << r.deviation_bc
              << '\n';
  std::cout << (report.all_ok ? "all sub-runs succeeded" : "some sub-runs failed; see manifest.json") << " ("
            << report.seconds << " s)\n";
  return report.all_ok ? 0 : 1;
}

int verify_cmd(int jobs) {
  bool ok = true;
  for (const CheckResult& r : verify_invariants(jobs)) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse optimal control by sum-of-squares cost estimation"};
  app.require_subcommand(1);

  Common common;
  std::string data_path, model_name, bench_name;

  auto* gen = app.add_subcommand("gen-data", "Generate an expert dataset for one system of an experiment");
  add_common(gen, common, true);
  gen->add_option("--system", common.system, "System / repetition index")->check(CLI::NonNegativeNumber);

  auto* est = app.add_subcommand("estimate", "Estimate a cost from a trajectory CSV");
  add_common(est, common, true);
  est->add_option("--data", data_path, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  est->add_option("--model", model_name, "lqr | temperature | pendulum | pendulum-perturbed");

  auto* rec = app.add_subcommand("reconstruct", "Estimate a cost, then fit a policy network to it");
  add_common(rec, common, true);
  rec->add_option("--data", data_path, "Trajectory CSV (default: generate from the config)")->check(CLI::ExistingFile);
  rec->add_option("--model", model_name, "lqr | temperature | pendulum | pendulum-perturbed");
  rec->add_option("--system", common.system, "System index when generating")->check(CLI::NonNegativeNumber);

  auto* bench = app.add_subcommand("bench", "Run a benchmark sweep");
  add_common(bench, common, false);
  bench->add_option("name", bench_name, "lqr | temperature | pendulum | pendulum-degree | pendulum-robustness")
      ->required()
      ->check(CLI::IsMember(preset_names()));

  auto* verify = app.add_subcommand("verify", "Run the invariant suite");
  int verify_jobs = 1;
  verify->add_option("--jobs", verify_jobs, "Worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_data(common);
    if (*est) return estimate_cmd(common, data_path, model_name);
    if (*rec) return reconstruct_cmd(common, data_path, model_name);
    if (*bench) return bench_cmd(common, bench_name);
    if (*verify) return verify_cmd(verify_jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
