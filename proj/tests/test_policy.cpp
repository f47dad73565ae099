#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "sosioc/ioc.hpp"
#include "sosioc/policy.hpp"
#include "sosioc/random.hpp"

using namespace sosioc;

namespace {

const Box kIn(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
const Box kOut(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));

// `trials` trajectories of `steps` uniform states labelled by `label`.
std::vector<Trajectory> labelled(const Policy& label, int trials, int steps, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Trajectory> out;
  for (int i = 0; i < trials; ++i) {
    Trajectory t;
    t.trial = i;
    t.states.resize(steps, 2);
    t.actions.resize(steps, 1);
    for (int k = 0; k < steps; ++k) {
      const Eigen::Vector2d x(rng.uniform(-1, 1), rng.uniform(-1, 1));
      t.states.row(k) = x.transpose();
      t.actions.row(k) = label(x).transpose();
    }
    out.push_back(std::move(t));
  }
  return out;
}

bool same_weights(const MlpPolicy& a, const MlpPolicy& b) {
  for (int l = 0; l < a.layers(); ++l)
    if (!(a.weights[l].array() == b.weights[l].array()).all() || !(a.biases[l].array() == b.biases[l].array()).all())
      return false;
  return true;
}

TrainConfig quick(int epochs, int batch = 32) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch = batch;
  c.step = 3e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Mlp, OutputsStayInTheActionBox) {
  const MlpPolicy net = MlpPolicy::create({2, 8, 1}, kIn, Box(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 3.0)), 1);
  CounterRng rng(2);
  for (int k = 0; k < 100; ++k) {
    const double v = net(Eigen::Vector2d(rng.uniform(-50, 50), rng.uniform(-50, 50)))[0];
    EXPECT_GE(v, 2.0);
    EXPECT_LE(v, 3.0);
  }
  EXPECT_EQ(net.parameter_count(), 2u * 8 + 8 + 8 + 1);
  EXPECT_THROW(MlpPolicy::create({2}, kIn, kOut, 1), std::invalid_argument);
}

TEST(BehaviorClone, ConstantTarget) {
  const auto data = labelled([](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 0.37); }, 8, 32, 1);
  TrainConfig cfg = quick(2000);
  cfg.step = 1e-3;
  const MlpPolicy net = behavior_clone(data, MlpPolicy::create({2, 16, 1}, kIn, kOut, 3), cfg);
  for (const Eigen::Vector2d x : {Eigen::Vector2d(0, 0), Eigen::Vector2d(0.9, -0.8), Eigen::Vector2d(-0.5, 0.5)})
    EXPECT_NEAR(net(x)[0], 0.37, 1e-3);
}

TEST(BehaviorClone, SameSeedSameWeights) {
  const auto data = labelled([](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, 0.5 * x[0]); }, 4, 16, 2);
  const MlpPolicy init = MlpPolicy::create({2, 8, 1}, kIn, kOut, 3);
  EXPECT_TRUE(same_weights(behavior_clone(data, init, quick(20)), behavior_clone(data, init, quick(20))));
  TrainConfig other = quick(20);
  other.seed = 6;
  EXPECT_FALSE(same_weights(behavior_clone(data, init, quick(20)), behavior_clone(data, init, other)));
}

TEST(BehaviorClone, RepresentablePolicyIsRecovered) {
  const MlpPolicy teacher = MlpPolicy::create({2, 8, 1}, kIn, kOut, 11);
  const Policy label = teacher.as_policy();
  const auto train = labelled(label, 32, 32, 3), test = labelled(label, 8, 32, 4);
  TrainLog log;
  TrainConfig cfg = quick(400);
  cfg.step = 1e-3;
  const MlpPolicy net = behavior_clone(train, MlpPolicy::create({2, 32, 1}, kIn, kOut, 12), cfg, &log);
  const SampleSet s = flatten(test);
  const double mse = (net.forward(s.states) - s.actions).squaredNorm() / static_cast<double>(s.size());
  EXPECT_LE(mse, 1e-3 * 4.0);

  // Smoothed training loss keeps falling after the first tenth of training.
  const auto& L = log.epoch_loss;
  ASSERT_EQ(L.size(), 400u);
  const std::size_t w = 10;
  auto avg = [&](std::size_t from) { return std::accumulate(L.begin() + from, L.begin() + from + w, 0.0) / w; };
  for (std::size_t k = L.size() / 10; k + 2 * w <= L.size(); k += w) EXPECT_LE(avg(k + w), avg(k) * (1.0 + 1e-2)) << k;
}

TEST(BehaviorClone, RejectsBadConfig) {
  const auto data = labelled([](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); }, 2, 4, 1);
  const MlpPolicy init = MlpPolicy::create({2, 4, 1}, kIn, kOut, 1);
  TrainConfig c = quick(5);
  c.batch = 0;
  EXPECT_THROW(behavior_clone(data, init, c), std::invalid_argument);
  c = quick(5);
  c.step = -1.0;
  EXPECT_THROW(behavior_clone(data, init, c), std::invalid_argument);
}

TEST(Reconstruct, ZeroViolationReducesToBehaviorCloning) {
  const Box box(Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1));
  const auto grid = cached_fekete_grid(box, 2);
  CostEstimate est;
  est.status = SolveStatus::Optimal;
  est.theta_ell = Eigen::Vector4d(0.0, 1.0, 1.0, 1.0);
  est.theta_psi = Eigen::VectorXd::Zero(grid->size());
  const auto data = labelled([](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, 0.3 * x[1]); }, 4, 16, 9);
  const MlpPolicy init = MlpPolicy::create({2, 8, 1}, kIn, kOut, 4);
  TrainLog a, b;
  const MlpPolicy bc = behavior_clone(data, init, quick(30), &a);
  const MlpPolicy rec = reconstruct_policy(est, grid, data, init, quick(30), &b);
  for (int l = 0; l < bc.layers(); ++l) EXPECT_LT((bc.weights[l] - rec.weights[l]).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t k = 0; k < a.epoch_loss.size(); ++k) EXPECT_NEAR(a.epoch_loss[k], b.epoch_loss[k], 1e-12);

  est.status = SolveStatus::IterLimit;
  EXPECT_THROW(reconstruct_policy(est, grid, data, init, quick(1)), std::invalid_argument);
}

TEST(Reconstruct, PsiActionGradientMatchesFiniteDifferences) {
  const Box box(Eigen::Vector3d(-1, -2, -3), Eigen::Vector3d(1, 2, 3));
  const auto grid = cached_fekete_grid(box, 4);
  CounterRng rng(21);
  Eigen::VectorXd theta(grid->size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = rng.uniform(-1, 1);
  const PsiHat psi(theta, grid);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d x(rng.uniform(-0.9, 0.9), rng.uniform(-1.9, 1.9));
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, rng.uniform(-2.9, 2.9));
    const double g = psi_action_gradient(psi, x, a)[0];
    const double h = 1e-5;
    Eigen::Vector3d p(x[0], x[1], a[0] + h), m(x[0], x[1], a[0] - h);
    const double fd = (psi(p) - psi(m)) / (2 * h);
    EXPECT_NEAR(g, fd, 1e-5 * std::max(1.0, std::abs(fd))) << k;
  }
}

TEST(Smape, Examples) {
  SampleSet s;
  s.states = Eigen::MatrixXd::Zero(2, 4);
  s.actions.resize(1, 4);
  s.actions << 1.0, -2.0, 0.5, 3.0;
  for (int i = 0; i < 4; ++i) s.states(0, i) = i;
  auto lookup = [&](double factor) {
    return [&, factor](const Eigen::VectorXd& x) {
      return Eigen::VectorXd::Constant(1, factor * s.actions(0, static_cast<Eigen::Index>(x[0])));
    };
  };
  EXPECT_NEAR(smape(lookup(1.0), s), 0.0, 1e-15);
  EXPECT_NEAR(smape(lookup(0.0), s), 2.0, 1e-15);
  EXPECT_NEAR(smape(lookup(3.0), s, 3), 1.0, 1e-15);

  // A zero denominator contributes nothing.
  s.actions(0, 0) = 0.0;
  auto zero_first = [&](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, x[0] == 0.0 ? 0.0 : s.actions(0, static_cast<Eigen::Index>(x[0])));
  };
  EXPECT_EQ(smape(zero_first, s), 0.0);
}

TEST(Split, FourToOneByTrial) {
  const auto data = labelled([](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); }, 20, 3, 1);
  const auto [train, test] = split_by_trial(data, 7, 0.8);
  EXPECT_EQ(train.size(), 16u);
  EXPECT_EQ(test.size(), 4u);
  std::vector<int> seen;
  for (const auto& t : train) seen.push_back(t.trial);
  for (const auto& t : test) seen.push_back(t.trial);
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(seen[i], i);
  const auto again = split_by_trial(data, 7, 0.8);
  EXPECT_EQ(again.second.front().trial, test.front().trial);
  EXPECT_EQ(flatten(train).size(), 48);
}

TEST(Checkpoint, JsonRoundTripIsExact) {
  const MlpPolicy net = MlpPolicy::create({2, 5, 3, 1}, kIn, kOut, 9);
  std::stringstream ss;
  write_policy_json(ss, net);
  const MlpPolicy back = read_policy_json(ss);
  EXPECT_TRUE(same_weights(net, back));
  EXPECT_EQ(back.widths, net.widths);
  const Eigen::Vector2d x(0.3, -0.6);
  EXPECT_EQ(net(x)[0], back(x)[0]);
}
