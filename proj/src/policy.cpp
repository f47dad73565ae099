#include "sosioc/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sosioc/parallel.hpp"
#include "sosioc/random.hpp"
#include "sosioc/util.hpp"

namespace sosioc {

namespace {

constexpr int kCheckpointVersion = 1;

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json box_json(const Box& box) {
  return {{"lower", to_std(box.lower)}, {"upper", to_std(box.upper)}};
}

Box box_from(const nlohmann::json& j) {
  return Box(to_vector(j.at("lower").get<std::vector<double>>()), to_vector(j.at("upper").get<std::vector<double>>()));
}

// Activations of one forward pass, kept for backpropagation.
struct ForwardPass {
  std::vector<Eigen::MatrixXd> act;  // act[0] = scaled input, act[l] = tanh(z_l)
  Eigen::MatrixXd out;               // squashed output
};

ForwardPass run_forward(const MlpPolicy& net, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  ForwardPass fp;
  fp.act.reserve(static_cast<std::size_t>(net.layers()) + 1);
  Eigen::MatrixXd a0(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) a0.col(j) = net.input_box.to_reference(X.col(j));
  fp.act.push_back(std::move(a0));
  for (int l = 0; l < net.layers(); ++l) {
    Eigen::MatrixXd z = net.weights[static_cast<std::size_t>(l)] * fp.act.back();
    z.colwise() += net.biases[static_cast<std::size_t>(l)];
    fp.act.push_back(z.array().tanh().matrix());
  }
  const Eigen::VectorXd c = net.output_box.center(), h = 0.5 * net.output_box.width();
  fp.out = (h.asDiagonal() * fp.act.back()).colwise() + c;
  return fp;
}

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  explicit AdamState(const MlpPolicy& net) {
    for (int l = 0; l < net.layers(); ++l) {
      const auto& W = net.weights[static_cast<std::size_t>(l)];
      mW.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
      vW.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
      mb.push_back(Eigen::VectorXd::Zero(W.rows()));
      vb.push_back(Eigen::VectorXd::Zero(W.rows()));
    }
  }
};

template <typename Param, typename Moment>
void adam_update(Param& p, Moment& m, Moment& v, const Moment& g, const TrainConfig& cfg, double step, double c1,
                 double c2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
  p.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

// Per-sample extra loss on the network output, with its gradient in the
// output. Empty for behaviour cloning.
using OutputTerm = std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& a, Eigen::VectorXd* grad)>;

double dataset_loss(const MlpPolicy& net, const SampleSet& s, const OutputTerm& extra) {
  const ForwardPass fp = run_forward(net, s.states);
  CompensatedSum<double> sum(1);
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    double v = (s.actions.col(j) - fp.out.col(j)).squaredNorm();
    if (extra) v += extra(s.states.col(j), fp.out.col(j), nullptr);
    sum.add(Eigen::Matrix<double, 1, 1>(v));
  }
  return sum.value()[0] / static_cast<double>(s.size());
}

MlpPolicy train(const SampleSet& s, MlpPolicy net, const TrainConfig& cfg, const OutputTerm& extra, TrainLog* log) {
  if (s.size() == 0) throw std::invalid_argument("training: empty dataset");
  cfg.validate(static_cast<std::size_t>(s.size()));
  net.validate();
  if (s.states.rows() != net.input_dim() || s.actions.rows() != net.output_dim())
    throw std::invalid_argument("training: dataset dimensions do not match the network");

  const auto M = static_cast<std::size_t>(s.size());
  std::vector<Eigen::Index> order(M);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  AdamState adam(net);
  const Eigen::VectorXd half = 0.5 * net.output_box.width();
  const int L = net.layers();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    // Cosine annealing from step to final_step_fraction * step.
    const double phase = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 1.0;
    const double step =
        cfg.step * (cfg.final_step_fraction + (1.0 - cfg.final_step_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase)));
    for (std::size_t i = M - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    for (std::size_t start = 0; start < M; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(M, start + static_cast<std::size_t>(cfg.batch));
      const auto B = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd X(s.states.rows(), B), A(s.actions.rows(), B);
      for (Eigen::Index j = 0; j < B; ++j) {
        X.col(j) = s.states.col(order[start + static_cast<std::size_t>(j)]);
        A.col(j) = s.actions.col(order[start + static_cast<std::size_t>(j)]);
      }
      const ForwardPass fp = run_forward(net, X);

      // d loss / d output, averaged over the batch.
      Eigen::MatrixXd g_out = -2.0 * (A - fp.out);
      if (extra) {
        Eigen::VectorXd g;
        for (Eigen::Index j = 0; j < B; ++j) {
          extra(X.col(j), fp.out.col(j), &g);
          g_out.col(j) += g;
        }
      }
      g_out /= static_cast<double>(B);

      // Back through the squash and the tanh layers.
      Eigen::MatrixXd delta =
          (half.asDiagonal() * g_out).cwiseProduct((1.0 - fp.act.back().array().square()).matrix());
      std::vector<Eigen::MatrixXd> gW(static_cast<std::size_t>(L));
      std::vector<Eigen::VectorXd> gb(static_cast<std::size_t>(L));
      for (int l = L - 1; l >= 0; --l) {
        const auto ul = static_cast<std::size_t>(l);
        gW[ul] = delta * fp.act[ul].transpose();
        gb[ul] = delta.rowwise().sum();
        if (l > 0)
          delta = (net.weights[ul].transpose() * delta).cwiseProduct((1.0 - fp.act[ul].array().square()).matrix());
      }

      ++adam.t;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.t));
      for (int l = 0; l < L; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        adam_update(net.weights[ul], adam.mW[ul], adam.vW[ul], gW[ul], cfg, step, c1, c2);
        adam_update(net.biases[ul], adam.mb[ul], adam.vb[ul], gb[ul], cfg, step, c1, c2);
      }
    }

    const double loss = dataset_loss(net, s, extra);
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (" + cfg.describe() + ")");
    if (log) log->epoch_loss.push_back(loss);
  }
  return net;
}

}  // namespace

MlpPolicy MlpPolicy::create(std::vector<int> widths, Box input_box, Box output_box, std::uint64_t seed) {
  MlpPolicy net;
  net.widths = std::move(widths);
  net.input_box = std::move(input_box);
  net.output_box = std::move(output_box);
  if (net.widths.size() < 2) throw std::invalid_argument("MlpPolicy: need at least input and output widths");
  CounterRng rng(seed);
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const int fan_in = net.widths[l], fan_out = net.widths[l + 1];
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("MlpPolicy: layer widths must be positive");
    const double r = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd W(fan_out, fan_in);
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-r, r);
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  net.validate();
  return net;
}

std::size_t MlpPolicy::parameter_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layers(); ++l)
    n += static_cast<std::size_t>(weights[static_cast<std::size_t>(l)].size() + biases[static_cast<std::size_t>(l)].size());
  return n;
}

Eigen::VectorXd MlpPolicy::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return forward(x).col(0);
}

Eigen::MatrixXd MlpPolicy::forward(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.rows() != input_dim()) throw std::invalid_argument("MlpPolicy: input dimension mismatch");
  return run_forward(*this, X).out;
}

Policy MlpPolicy::as_policy() const {
  return [net = *this](const Eigen::VectorXd& x) { return Eigen::VectorXd(net(x)); };
}

void MlpPolicy::validate() const {
  if (widths.size() < 2 || weights.size() + 1 != widths.size() || biases.size() != weights.size())
    throw std::invalid_argument("MlpPolicy: inconsistent layer count");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l] || biases[l].size() != widths[l + 1])
      throw std::invalid_argument("MlpPolicy: layer " + std::to_string(l) + " has the wrong shape");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw std::invalid_argument("MlpPolicy: non-finite parameters in layer " + std::to_string(l));
  }
  if (input_box.dim() != widths.front() || output_box.dim() != widths.back())
    throw std::invalid_argument("MlpPolicy: boxes do not match the input/output widths");
}

void write_policy_json(std::ostream& os, const MlpPolicy& net) {
  net.validate();
  nlohmann::json doc;
  doc["schema_version"] = kCheckpointVersion;
  doc["kind"] = "mlp_policy";
  doc["activation"] = "tanh";
  doc["widths"] = net.widths;
  doc["input_box"] = box_json(net.input_box);
  doc["output_box"] = box_json(net.output_box);
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < net.layers(); ++l) {
    const auto& W = net.weights[static_cast<std::size_t>(l)];
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(W.size()));
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) rows.push_back(W(i, j));
    layers.push_back({{"weights", rows}, {"biases", to_std(net.biases[static_cast<std::size_t>(l)])}});
  }
  doc["layers"] = std::move(layers);
  os << doc.dump(1) << '\n';
}

MlpPolicy read_policy_json(std::istream& is) {
  const auto doc = nlohmann::json::parse(is);
  if (doc.at("schema_version").get<int>() != kCheckpointVersion || doc.at("kind").get<std::string>() != "mlp_policy")
    throw std::invalid_argument("read_policy_json: unsupported document");
  if (doc.at("activation").get<std::string>() != "tanh")
    throw std::invalid_argument("read_policy_json: unsupported activation");
  MlpPolicy net;
  net.widths = doc.at("widths").get<std::vector<int>>();
  net.input_box = box_from(doc.at("input_box"));
  net.output_box = box_from(doc.at("output_box"));
  const auto& layers = doc.at("layers");
  if (layers.size() + 1 != net.widths.size()) throw std::invalid_argument("read_policy_json: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const int rows = net.widths[l + 1], cols = net.widths[l];
    if (w.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
      throw std::invalid_argument("read_policy_json: weight count mismatch in layer " + std::to_string(l));
    net.weights.push_back(
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), rows, cols));
    net.biases.push_back(to_vector(layers[l].at("biases").get<std::vector<double>>()));
  }
  net.validate();
  return net;
}

void TrainConfig::validate(std::size_t samples) const {
  if (!(step > 0.0)) throw std::invalid_argument("TrainConfig: step must be positive (" + describe() + ")");
  if (batch < 1 || static_cast<std::size_t>(batch) > samples)
    throw std::invalid_argument("TrainConfig: batch must lie in [1, " + std::to_string(samples) + "] (" + describe() + ")");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive (" + describe() + ")");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw std::invalid_argument("TrainConfig: invalid moment parameters (" + describe() + ")");
  if (!(psi_weight >= 0.0)) throw std::invalid_argument("TrainConfig: psi_weight must be nonnegative");
  if (!(final_step_fraction > 0.0 && final_step_fraction <= 1.0))
    throw std::invalid_argument("TrainConfig: final_step_fraction must lie in (0, 1]");
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << "step=" << step << " batch=" << batch << " epochs=" << epochs << " seed=" << seed << " beta1=" << beta1
     << " beta2=" << beta2 << " eps=" << eps << " psi_weight=" << psi_weight
     << " final_step_fraction=" << final_step_fraction;
  return os.str();
}

SampleSet flatten(const std::vector<Trajectory>& data) {
  if (data.empty()) return {};
  Eigen::Index total = 0;
  for (const auto& t : data) total += t.steps();
  SampleSet s;
  s.states.resize(data.front().states.cols(), total);
  s.actions.resize(data.front().actions.cols(), total);
  Eigen::Index c = 0;
  for (const auto& t : data) {
    if (t.states.cols() != s.states.rows() || t.actions.cols() != s.actions.rows())
      throw std::invalid_argument("flatten: trajectories disagree on dimensions");
    s.states.middleCols(c, t.steps()) = t.states.transpose();
    s.actions.middleCols(c, t.steps()) = t.actions.transpose();
    c += t.steps();
  }
  return s;
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_by_trial(const std::vector<Trajectory>& data,
                                                                         std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_by_trial: train fraction must lie in (0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
  std::pair<std::vector<Trajectory>, std::vector<Trajectory>> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.first : out.second).push_back(data[order[i]]);
  return out;
}

MlpPolicy behavior_clone(const std::vector<Trajectory>& data, const MlpPolicy& net, const TrainConfig& cfg,
                         TrainLog* log) {
  if (data.empty()) throw std::invalid_argument("behavior_clone: empty dataset");
  return train(flatten(data), net, cfg, {}, log);
}

Eigen::VectorXd psi_action_gradient(const PsiHat& psi, const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& a) {
  Eigen::VectorXd node(x.size() + a.size());
  node << x, a;
  return psi.gradient(node).tail(a.size());
}

MlpPolicy reconstruct_policy(const CostEstimate& estimate, std::shared_ptr<const InterpolationGrid> grid,
                             const std::vector<Trajectory>& data, const MlpPolicy& net, const TrainConfig& cfg,
                             TrainLog* log) {
  if (estimate.status != SolveStatus::Optimal)
    throw std::invalid_argument("reconstruct_policy: estimate is not Optimal (" + to_string(estimate.status) + ")");
  if (data.empty()) throw std::invalid_argument("reconstruct_policy: empty dataset");
  if (!grid || grid->size() != estimate.theta_psi.size())
    throw std::invalid_argument("reconstruct_policy: grid does not match theta_psi");
  // theta carries an arbitrary positive scale; weigh psi-hat as if the cost
  // coefficients (constant excluded) had unit norm.
  const double cost_norm = estimate.theta_ell.tail(estimate.theta_ell.size() - 1).norm();
  if (!(cost_norm > 0.0)) throw std::invalid_argument("reconstruct_policy: estimated cost is identically zero");
  const auto psi = std::make_shared<PsiHat>(estimate.theta_psi, grid);
  const double w = cfg.psi_weight / cost_norm;
  OutputTerm extra;
  if (w != 0.0) {
    extra = [psi, w, box = grid->box](const Eigen::VectorXd& x, const Eigen::VectorXd& a, Eigen::VectorXd* g) {
      Eigen::VectorXd node(x.size() + a.size());
      node << x, a;
      node = box.clamp(node);
      if (g) *g = w * psi->gradient(node).tail(a.size());
      return w * (*psi)(node);
    };
  }
  return train(flatten(data), net, cfg, extra, log);
}

double smape(const Policy& policy, const SampleSet& test, int jobs) {
  if (test.size() == 0) throw std::invalid_argument("smape: empty test set");
  std::vector<double> terms(static_cast<std::size_t>(test.size()), 0.0);
  parallel_for(terms.size(), jobs, [&](std::size_t j) {
    const Eigen::VectorXd a = test.actions.col(static_cast<Eigen::Index>(j));
    const Eigen::VectorXd g = policy(test.states.col(static_cast<Eigen::Index>(j)));
    double t = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double den = std::abs(a[i]) + std::abs(g[i]);
      if (den >= 1e-12) t += std::abs(a[i] - g[i]) / den;
    }
    terms[j] = t;
  });
  CompensatedSum<double> sum(1);
  for (double t : terms) sum.add(Eigen::Matrix<double, 1, 1>(t));
  return 2.0 * sum.value()[0] / static_cast<double>(test.size());
}

}  // namespace sosioc
