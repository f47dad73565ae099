#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sosioc/markov.hpp"

namespace sosioc {

struct LqrSpec {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  double alpha = 0.99;

  void validate() const;
};

struct LqrSolution {
  Eigen::MatrixXd P;  // V(x) = x^T P x (+ a noise-dependent constant)
  Eigen::MatrixXd K;  // a = -K x
  int iterations = 0;
};

/// Discounted Riccati fixed point by value iteration from P = Q.
LqrSolution riccati_gain(const LqrSpec& spec, double tol = 1e-12, int max_iter = 100000);

/// Right-hand side of the discounted Riccati recursion at P.
Eigen::MatrixXd riccati_map(const LqrSpec& spec, const Eigen::MatrixXd& P);

/// Spec of the built-in LQR system with Q = diag(q1, q2), R = r.
LqrSpec lqr_experiment_spec(double q1, double q2, double r);

using RunningCost = std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& a)>;

/// theta^T features(x, a) for the model's feature set.
RunningCost feature_cost(const MarkovModel& model, const Eigen::VectorXd& theta);

struct MpcSpec {
  int horizon = 64;
  RunningCost cost;
  double alpha = 0.9;
  int max_iter = 100;
  double reg_init = 1e-6;
  double reg_factor = 10.0;
  double reg_max = 1e10;
  int line_search_steps = 12;
  double tol = 1e-12;     // relative cost decrease that counts as converged
  double fd_step = 1e-5;  // relative finite-difference step
};

struct MpcPlan {
  Eigen::MatrixXd states;   // (horizon + 1) x n_x
  Eigen::MatrixXd actions;  // horizon x n_a
  std::vector<double> cost_history;  // accepted costs, starting with the initial rollout
  int iterations = 0;
  bool converged = false;
};

/// Box-constrained iLQR over the noise-free dynamics from a zero-action start.
MpcPlan ilqr_plan(const MarkovModel& model, const MpcSpec& spec, const Eigen::VectorXd& x0);

/// First action of the plan, inside the action box.
Eigen::VectorXd mpc_action(const MarkovModel& model, const MpcSpec& spec, const Eigen::VectorXd& x);

/// Receding-horizon policy. The planning model may differ from the model it
/// is later simulated on.
Policy mpc_policy(MarkovModel planning_model, MpcSpec spec);

/// Initial-state law for dataset generation.
struct InitialDistribution {
  enum class Kind { Gaussian, Uniform, TruncatedGaussian, Fixed };
  Kind kind = Kind::Gaussian;
  Eigen::VectorXd mean;   // Gaussian / TruncatedGaussian centre, Fixed point
  Eigen::VectorXd sigma;  // Gaussian / TruncatedGaussian
  std::optional<Box> box; // Uniform support, TruncatedGaussian truncation

  static InitialDistribution gaussian(Eigen::VectorXd mean, Eigen::VectorXd sigma);
  static InitialDistribution uniform(Box box);
  static InitialDistribution truncated_gaussian(Eigen::VectorXd mean, Eigen::VectorXd sigma, Box box);
  static InitialDistribution fixed(Eigen::VectorXd x0);

  Eigen::VectorXd sample(std::uint64_t key) const;
  std::string describe() const;
};

/// M trials of N steps; trial i uses derive_seed(seed, i) for both its
/// initial state and its noise.
std::vector<Trajectory> generate_dataset(const MarkovModel& model, const Policy& expert, int trials, int steps,
                                         const InitialDistribution& init, std::uint64_t seed, int jobs = 1);

}  // namespace sosioc
