#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sosioc/box.hpp"
#include "sosioc/expert.hpp"
#include "sosioc/ipm.hpp"
#include "sosioc/policy.hpp"

namespace sosioc {

/// Network shape plus optimizer settings for one training run.
struct NetConfig {
  std::vector<int> hidden;
  TrainConfig train;
};

/// Everything one benchmark needs. Counts mean: LQR systems, temperature
/// cost pairs, pendulum dataset repetitions, robustness repetitions.
struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  std::string experiment = "lqr";     // lqr | temperature | pendulum | pendulum-robustness
  std::string sweep = "degree";       // pendulum only: degree | data_size
  std::uint64_t seed = 1;
  int systems = 32;
  std::vector<std::pair<int, int>> degrees{{3, 2}};  // (d_psi, d_V)
  int trials = 128;
  int steps = 4;
  std::vector<int> data_sizes;        // pendulum data_size sweep: first M trials
  InitialDistribution init;
  std::optional<Box> box;             // overrides the model box
  std::optional<double> state_slack;  // overrides the model slack
  Eigen::VectorXd true_cost;          // fixed cost (pendulum); empty = sampled
  SolverConfig solver;
  double candidate_density = 4.0;
  int psi_grid_points = 10000;        // uniform grid for the psi-hat minimum
  int mpc_horizon = 64;
  double mpc_alpha = 0.9;
  bool reconstruct = false;           // pendulum degree sweep: fit policies
  double train_fraction = 0.8;
  NetConfig policy_net{{128, 64}, {}};
  NetConfig bc_net{{128, 128}, {}};
  Eigen::VectorXd test_start;         // robustness
  int test_steps = 256;
  int histogram_bins = 20;
  std::string output_dir = "out";     // not part of the fingerprint
  int jobs = 1;                       // not part of the fingerprint

  /// Throws std::invalid_argument.
  void validate() const;
  /// Canonical JSON without output_dir and jobs.
  std::string canonical_json() const;
  std::string fingerprint() const;
};

/// Parses a config document; unknown keys and a wrong schema_version throw.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// Names accepted by preset_config.
std::vector<std::string> preset_names();
/// Desk-scale defaults: lqr, temperature, pendulum (data-size sweep),
/// pendulum-degree (policy reconstruction), pendulum-robustness.
ExperimentConfig preset_config(const std::string& name);

struct ErrorRow {
  int system = 0;
  int d_psi = 0;
  int d_V = 0;
  int trials = 0;
  int steps = 0;
  bool ok = false;
  std::string status;
  double error = 0.0;
  double objective = 0.0;
  double psi_min = 0.0;
  double psi_max = 0.0;
  int iterations = 0;
  double smape = -1.0;  // reconstructed policy, when fitted
  Eigen::VectorXd theta_true;
  Eigen::VectorXd theta_est;
  std::string message;
};

struct CurvePoint {
  int d_psi = 0;
  int x = 0;  // d_psi or M
  int count = 0;
  double median = 0.0;
  double p90 = 0.0;
  double mean = 0.0;
};

struct HistogramBin {
  int d_psi = 0;
  int trials = 0;
  double lower = 0.0;
  double upper = 0.0;
  int count = 0;
};

struct SmapeRow {
  int system = 0;
  std::string method;  // behavior_clone | reconstructed
  int d_psi = 0;
  double smape = 0.0;
};

struct RobustnessRow {
  int rep = 0;
  bool ok = false;
  std::string status;
  double error = 0.0;
  double deviation_estimated = 0.0;
  double deviation_bc = 0.0;
};

struct RunReport {
  std::string experiment;
  std::string fingerprint;
  std::vector<ErrorRow> errors;
  std::vector<CurvePoint> curve;
  std::vector<HistogramBin> histogram;
  std::vector<SmapeRow> smape;
  std::vector<RobustnessRow> robustness;
  std::vector<std::string> files;
  double seconds = 0.0;
  bool all_ok = false;
};

/// Model the estimator assumes (box and slack overrides applied).
MarkovModel experiment_model(const ExperimentConfig& config);

struct SystemData {
  Eigen::VectorXd theta_true;
  std::vector<Trajectory> data;
};

/// Expert dataset of one system/repetition; a pure function of
/// (config fingerprint fields, system).
SystemData experiment_dataset(const ExperimentConfig& config, int system);

/// Runs the experiment and writes its CSVs plus manifest.json into
/// config.output_dir. Sub-run failures are recorded per row.
RunReport run_experiment(const ExperimentConfig& config);

/// Drops values outside the central `keep` mass, then `bins` equal-width
/// bins over what remains.
std::vector<HistogramBin> central_histogram(std::vector<double> values, int bins, double keep = 0.995);

/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast invariant suite (interpolation, barrier, solver, SMAPE, determinism).
std::vector<CheckResult> verify_invariants(int jobs = 1);

}  // namespace sosioc
