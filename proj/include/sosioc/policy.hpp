#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sosioc/box.hpp"
#include "sosioc/ioc.hpp"
#include "sosioc/markov.hpp"

namespace sosioc {

/// Fully connected tanh network. Inputs are mapped onto [-1, 1] over
/// `input_box`; the last layer is squashed into `output_box` by
/// centre + half_width * tanh(z), so every output is a valid action.
struct MlpPolicy {
  std::vector<int> widths;                // n_x, hidden..., n_a
  std::vector<Eigen::MatrixXd> weights;   // widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> biases;
  Box input_box;
  Box output_box;

  /// Glorot-uniform weights, zero biases.
  static MlpPolicy create(std::vector<int> widths, Box input_box, Box output_box, std::uint64_t seed);

  int layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  std::size_t parameter_count() const;

  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Batched evaluation; columns are states.
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  Policy as_policy() const;

  void validate() const;
};

void write_policy_json(std::ostream& os, const MlpPolicy& net);
MlpPolicy read_policy_json(std::istream& is);

struct TrainConfig {
  double step = 1e-3;
  int batch = 256;
  int epochs = 200;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double psi_weight = 1.0;  // multiplier on psi-hat in reconstruct_policy
  double final_step_fraction = 0.01;  // cosine-annealed step at the last epoch, relative to `step`

  /// Throws std::invalid_argument; `samples` is the training-set size.
  void validate(std::size_t samples) const;
  std::string describe() const;
};

/// Column-stacked (state, action) pairs.
struct SampleSet {
  Eigen::MatrixXd states;   // n_x x M
  Eigen::MatrixXd actions;  // n_a x M

  Eigen::Index size() const { return states.cols(); }
};

SampleSet flatten(const std::vector<Trajectory>& data);

/// Seeded shuffle of the trials, then the first round(train_fraction * M)
/// trials train and the rest test.
std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_by_trial(const std::vector<Trajectory>& data,
                                                                         std::uint64_t seed,
                                                                         double train_fraction = 0.8);

struct TrainLog {
  std::vector<double> epoch_loss;  // full training-set loss after each epoch
};

/// Minimizes mean ||a - pi(x)||^2 with Adam from the weights of `net`.
MlpPolicy behavior_clone(const std::vector<Trajectory>& data, const MlpPolicy& net, const TrainConfig& cfg,
                         TrainLog* log = nullptr);

/// Minimizes mean [w * psi-hat(x, pi(x)) + ||a - pi(x)||^2] with
/// w = psi_weight / ||theta_ell without the constant||, which makes the
/// result independent of the estimate's scale. The estimate must be Optimal.
MlpPolicy reconstruct_policy(const CostEstimate& estimate, std::shared_ptr<const InterpolationGrid> grid,
                             const std::vector<Trajectory>& data, const MlpPolicy& net, const TrainConfig& cfg,
                             TrainLog* log = nullptr);

/// d psi-hat / d a at the node (x, a).
Eigen::VectorXd psi_action_gradient(const PsiHat& psi, const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& a);

/// (2 / M) sum_i sum_j |a_ij - g_ij| / (|a_ij| + |g_ij|); pairs with a zero
/// denominator contribute nothing. Evaluation is spread over `jobs` threads.
double smape(const Policy& policy, const SampleSet& test, int jobs = 1);

}  // namespace sosioc
