#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sosioc/box.hpp"
#include "sosioc/quadrature.hpp"

namespace sosioc {

using Dynamics = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& a)>;
using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd& x)>;

struct Feature {
  std::string name;
  std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& a)> eval;
};

/// Discounted Markov control model on the box K = X x A.
///
/// `dynamics` is the deterministic part of the transition; the next state is
/// dynamics(x, a) + w with w drawn from `noise` (absent for deterministic
/// systems). Next states may leave X by at most `state_slack` times the
/// state-box width on each side before they are clipped; value-function
/// bases are defined on that enlarged box.
struct MarkovModel {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  Box box;
  Dynamics dynamics;
  std::optional<TruncatedNormal> noise;
  double discount = 0.9;
  std::vector<Feature> features;
  double state_slack = 0.0;
  int noise_nodes = kDefaultNoiseNodes;

  Box state_box() const { return box.slice(0, state_dim); }
  Box action_box() const { return box.slice(state_dim, action_dim); }
  Box value_box() const { return state_slack > 0.0 ? state_box().expanded(state_slack) : state_box(); }
  int feature_count() const { return static_cast<int>(features.size()); }

  Eigen::VectorXd feature_values(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;
  double cost(const Eigen::VectorXd& theta, const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;
  Eigen::VectorXd state_of(const Eigen::VectorXd& node) const { return node.head(state_dim); }
  Eigen::VectorXd action_of(const Eigen::VectorXd& node) const { return node.tail(action_dim); }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct Trajectory {
  Eigen::MatrixXd states;   // N x n_x
  Eigen::MatrixXd actions;  // N x n_a
  int trial = 0;
  std::uint64_t seed = 0;
  int clip_count = 0;

  Eigen::Index steps() const { return states.rows(); }
  Eigen::VectorXd node(Eigen::Index t) const;
};

/// Prebuilt noise quadrature for repeated adjoint evaluations.
class TransitionExpectation {
 public:
  explicit TransitionExpectation(const MarkovModel& model);

  /// E[r(clip(f(x, a) + w))]; `clipped` counts quadrature points that left
  /// the value box.
  Eigen::VectorXd operator()(const Eigen::VectorXd& node, const VectorFunction& r,
                             int* clipped = nullptr) const;

 private:
  Dynamics dynamics_;
  int state_dim_;
  std::optional<NoiseRule> rule_;
  Box value_box_;
};

/// Row of the q* adjoint at `node` for the value basis r.
Eigen::VectorXd qstar_row(const MarkovModel& model, const Eigen::VectorXd& node,
                          const VectorFunction& value_basis, int* clipped = nullptr);

/// Row of the P* adjoint: r at the state part of `node`.
Eigen::VectorXd pstar_row(const MarkovModel& model, const Eigen::VectorXd& node,
                          const VectorFunction& value_basis);

struct SimulateOptions {
  bool clip = true;
};

/// Closed-loop rollout; noise at step t uses counters keyed by (seed, t).
Trajectory simulate(const MarkovModel& model, const Policy& policy, const Eigen::VectorXd& x0,
                    int steps, std::uint64_t seed, const SimulateOptions& options = {});

struct PendulumParams {
  double sin_gain = 0.01;
  double control_gain = 1.0;
  std::optional<TruncatedNormal> noise;
};

MarkovModel lqr_model();
MarkovModel temperature_model();
MarkovModel pendulum_model(const PendulumParams& params = {});
/// Pendulum with the 5% parameter perturbation and small process noise.
MarkovModel perturbed_pendulum_model();

struct BuiltinModels {
  MarkovModel lqr;
  MarkovModel temperature;
  MarkovModel pendulum;
};

BuiltinModels builtin_models();

/// Model by name: "lqr", "temperature", "pendulum", "pendulum-perturbed".
MarkovModel model_by_name(const std::string& name);

void write_trajectories_csv(std::ostream& os, const std::vector<Trajectory>& data, int state_dim,
                            int action_dim);
/// Dimensions are taken from the header.
std::vector<Trajectory> read_trajectories_csv(std::istream& is);

}  // namespace sosioc
