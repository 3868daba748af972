#include "beltforge/bc_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace beltforge {

namespace {

constexpr double kMinScale = 1e-12;
constexpr double kDivergenceFactor = 1e3;

template <int N>
void accumulate_stats(const std::vector<std::vector<Eigen::Matrix<double, N, 1>>>& groups,
                      Eigen::Matrix<double, N, 1>& mean, Eigen::Matrix<double, N, 1>& scale) {
  // Per-group partial sums first, so duplicated groups leave the result
  // bitwise unchanged.
  using Vec = Eigen::Matrix<double, N, 1>;
  Vec sum = Vec::Zero();
  std::size_t count = 0;
  for (const auto& g : groups) {
    Vec s = Vec::Zero();
    for (const auto& v : g) s += v;
    sum += s;
    count += g.size();
  }
  mean = sum / static_cast<double>(count);
  Vec sq = Vec::Zero();
  for (const auto& g : groups) {
    Vec s = Vec::Zero();
    for (const auto& v : g) s += (v - mean).cwiseAbs2();
    sq += s;
  }
  scale = (sq / static_cast<double>(count)).cwiseSqrt();
  for (int i = 0; i < N; ++i)
    if (!(scale(i) > kMinScale)) scale(i) = 1.0;
}

Eigen::MatrixXd apply_activation(Activation a, const Eigen::MatrixXd& z) {
  return a == Activation::kTanh ? Eigen::MatrixXd(z.array().tanh()) : z;
}

void dataset_matrices(const DemonstrationDataset& data, Eigen::MatrixXd& states,
                      Eigen::MatrixXd& actions) {
  const auto n = static_cast<Eigen::Index>(data.pair_count());
  states.resize(3, n);
  actions.resize(6, n);
  Eigen::Index col = 0;
  for (const auto& demo : data.demos) {
    for (const auto& pair : demo) {
      states.col(col) = data.normalization.normalize_state(pair.state);
      actions.col(col) = data.normalization.normalize_action(pair.action);
      ++col;
    }
  }
}

Vector6d normalized_action(const Vector6d& a) {
  Vector6d out = a;
  for (int i = 3; i < 6; ++i) out(i) = wrap_angle(a(i));
  return out;
}

}  // namespace

Eigen::Vector3d Normalization::normalize_state(const Eigen::Vector3d& s) const {
  return (s - state_mean).cwiseQuotient(state_scale);
}
Eigen::Vector3d Normalization::denormalize_state(const Eigen::Vector3d& s) const {
  return s.cwiseProduct(state_scale) + state_mean;
}
Vector6d Normalization::normalize_action(const Vector6d& a) const {
  return (a - action_mean).cwiseQuotient(action_scale);
}
Vector6d Normalization::denormalize_action(const Vector6d& a) const {
  return a.cwiseProduct(action_scale) + action_mean;
}

std::size_t DemonstrationDataset::pair_count() const {
  std::size_t n = 0;
  for (const auto& d : demos) n += d.size();
  return n;
}

DemonstrationDataset build_dataset(const std::vector<CorrectedPath>& demos,
                                   const Eigen::Vector3d& pulley_center,
                                   std::vector<std::string> source_ids) {
  if (demos.empty()) throw DomainError("build_dataset: no demonstrations");
  if (!source_ids.empty() && source_ids.size() != demos.size())
    throw DomainError("build_dataset: one source id per demonstration");
  DemonstrationDataset out;
  out.pulley_center = pulley_center;
  out.source_ids = std::move(source_ids);
  std::vector<std::vector<Eigen::Vector3d>> states;
  std::vector<std::vector<Vector6d>> actions;
  for (const auto& demo : demos) {
    if (demo.poses.empty()) throw DomainError("build_dataset: empty demonstration");
    std::vector<StateActionPair> seq;
    seq.reserve(demo.size());
    for (std::size_t t = 0; t < demo.size(); ++t) {
      const Pose& next = demo.poses[std::min(t + 1, demo.size() - 1)];
      StateActionPair p{demo.poses[t].position - pulley_center, normalized_action(next.as_vector())};
      if (!p.state.allFinite() || !p.action.allFinite())
        throw DomainError("build_dataset: non-finite pose");
      seq.push_back(p);
    }
    std::vector<Eigen::Vector3d> s;
    std::vector<Vector6d> a;
    for (const auto& p : seq) {
      s.push_back(p.state);
      a.push_back(p.action);
    }
    states.push_back(std::move(s));
    actions.push_back(std::move(a));
    out.demos.push_back(std::move(seq));
  }
  accumulate_stats<3>(states, out.normalization.state_mean, out.normalization.state_scale);
  accumulate_stats<6>(actions, out.normalization.action_mean, out.normalization.action_scale);
  return out;
}

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "linear"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "linear") return Activation::kLinear;
  throw ConfigError("unknown activation '" + s + "'");
}

Eigen::MatrixXd Policy::forward(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd a = states;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * a;
    z.colwise() += layers[l].bias;
    a = l + 1 == layers.size() ? z : apply_activation(activation, z);
  }
  return a;
}

Vector6d Policy::act(const Eigen::Vector3d& state) const {
  const Eigen::MatrixXd out = forward(normalization.normalize_state(state));
  return normalization.denormalize_action(out.col(0));
}

std::size_t Policy::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void Policy::validate() const {
  if (layers.empty()) throw FormatError("policy: no layers");
  Eigen::Index in = 3;
  for (const auto& l : layers) {
    if (l.weight.cols() != in || l.bias.size() != l.weight.rows())
      throw FormatError("policy: inconsistent layer shapes");
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw FormatError("policy: non-finite weights");
    in = l.weight.rows();
  }
  if (in != 6) throw FormatError("policy: output dimension must be 6");
}

Policy init_policy(const std::vector<int>& hidden, Activation activation,
                   const Normalization& normalization, std::uint64_t seed) {
  Policy p;
  p.activation = activation;
  p.normalization = normalization;
  std::mt19937_64 rng(seed);
  std::vector<int> dims{3};
  for (int h : hidden) {
    if (h < 1) throw ConfigError("policy: hidden width must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(6);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    std::normal_distribution<double> w(0.0, std::sqrt(2.0 / (in + out)));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = w(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

double mse_loss(const Policy& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                std::vector<DenseLayer>* gradient) {
  const auto batch = states.cols();
  if (batch == 0 || actions.cols() != batch) throw DomainError("mse_loss: bad batch");
  const std::size_t L = policy.layers.size();
  // inputs[l] feeds layer l; inputs[L] is the output.
  std::vector<Eigen::MatrixXd> inputs(L + 1);
  inputs[0] = states;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = policy.layers[l].weight * inputs[l];
    z.colwise() += policy.layers[l].bias;
    inputs[l + 1] = l + 1 == L ? z : apply_activation(policy.activation, z);
  }
  const Eigen::MatrixXd residual = inputs[L] - actions;
  const double denom = static_cast<double>(batch * actions.rows());
  const double loss = residual.squaredNorm() / denom;
  if (!gradient) return loss;

  gradient->resize(L);
  Eigen::MatrixXd delta = residual * (2.0 / denom);
  for (std::size_t l = L; l-- > 0;) {
    (*gradient)[l].weight = delta * inputs[l].transpose();
    (*gradient)[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    delta = policy.layers[l].weight.transpose() * delta;
    if (policy.activation == Activation::kTanh)
      delta.array() *= 1.0 - inputs[l].array().square();
  }
  return loss;
}

void TrainOptions::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(final_rate_ratio > 0.0 && final_rate_ratio <= 1.0))
    throw ConfigError("train: final_rate_ratio must be in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (!(weight_averaging >= 0.0 && weight_averaging < 1.0))
    throw ConfigError("train: weight_averaging must be in [0, 1)");
}

TrainResult train(const DemonstrationDataset& dataset, const TrainOptions& options,
                  std::uint64_t seed) {
  options.validate();
  if (dataset.pair_count() == 0) throw DomainError("train: empty dataset");
  Eigen::MatrixXd X, Y;
  dataset_matrices(dataset, X, Y);
  const auto n = X.cols();

  TrainResult result;
  result.policy = init_policy(options.hidden, options.activation, dataset.normalization, seed);
  Policy p = result.policy;
  Policy& avg = result.policy;
  const double initial = mse_loss(p, X, Y);
  result.loss_trace.push_back(initial);

  std::vector<DenseLayer> m, v, g;
  for (const auto& l : p.layers) {
    m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                 Eigen::VectorXd::Zero(l.bias.size())});
  }
  v = m;

  std::mt19937_64 shuffle_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd bx, by;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double progress = options.epochs > 1 ? static_cast<double>(epoch) / (options.epochs - 1) : 0.0;
    const double lr = options.learning_rate * std::pow(options.final_rate_ratio, progress);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (Eigen::Index start = 0; start < n; start += options.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(options.batch_size, n - start);
      bx.resize(3, b);
      by.resize(6, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        bx.col(j) = X.col(order[static_cast<std::size_t>(start + j)]);
        by.col(j) = Y.col(order[static_cast<std::size_t>(start + j)]);
      }
      mse_loss(p, bx, by, &g);
      ++step;
      const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto update = [&](auto& param, auto& mm, auto& vv, const auto& grad) {
          mm = options.beta1 * mm + (1.0 - options.beta1) * grad;
          vv = options.beta2 * vv + (1.0 - options.beta2) * grad.cwiseAbs2();
          param.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + options.epsilon);
        };
        update(p.layers[l].weight, m[l].weight, v[l].weight, g[l].weight);
        update(p.layers[l].bias, m[l].bias, v[l].bias, g[l].bias);
      }
      const double d = options.weight_averaging;
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        if (d == 0.0) {
          avg.layers[l] = p.layers[l];
          continue;
        }
        avg.layers[l].weight = d * avg.layers[l].weight + (1.0 - d) * p.layers[l].weight;
        avg.layers[l].bias = d * avg.layers[l].bias + (1.0 - d) * p.layers[l].bias;
      }
    }
    const double loss = mse_loss(avg, X, Y);
    result.loss_trace.push_back(loss);
    if (!std::isfinite(loss) || loss > kDivergenceFactor * initial)
      throw TrainingDivergedError("train: loss diverged at epoch " + std::to_string(epoch + 1),
                                  result.loss_trace);
  }
  return result;
}

double policy_gradient_check(const Policy& policy, const std::vector<StateActionPair>& batch,
                             double h) {
  if (batch.empty()) throw DomainError("policy_gradient_check: empty batch");
  Eigen::MatrixXd X(3, static_cast<Eigen::Index>(batch.size()));
  Eigen::MatrixXd Y(6, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)) = policy.normalization.normalize_state(batch[i].state);
    Y.col(static_cast<Eigen::Index>(i)) = policy.normalization.normalize_action(batch[i].action);
  }
  std::vector<DenseLayer> grad;
  mse_loss(policy, X, Y, &grad);

  Policy probe = policy;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = mse_loss(probe, X, Y);
    param = saved - h;
    const double down = mse_loss(probe, X, Y);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& layer = probe.layers[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) check(layer.weight(r, c), grad[l].weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) check(layer.bias(r), grad[l].bias(r));
  }
  return worst;
}

Path rollout(const Policy& policy, const Pose& start, const Eigen::Vector3d& pulley_center,
             int steps, double dt) {
  if (steps < 1) throw DomainError("rollout: steps must be >= 1");
  Path out;
  out.dt = dt;
  Eigen::Vector3d state = start.position - pulley_center;
  for (int t = 0; t < steps; ++t) {
    const Vector6d a = policy.act(state);
    if (!a.allFinite()) throw RolloutError("rollout: non-finite policy output", t);
    out.waypoints.push_back(Pose::from_vector(normalized_action(a)));
    state = a.head<3>() - pulley_center;
  }
  return out;
}

Path rollout_path(const Policy& policy, const Pose& start, const Eigen::Vector3d& pulley_center,
                  int segments, double dt) {
  Path out = rollout(policy, start, pulley_center, segments, dt);
  out.waypoints.insert(out.waypoints.begin(), start);
  return out;
}

EvalMetrics evaluate(const Path& learned, const std::vector<CorrectedPath>& references) {
  if (references.empty()) throw DomainError("evaluate: no references");
  if (learned.waypoints.empty()) throw DomainError("evaluate: empty learned path");
  EvalMetrics m;
  const std::size_t L = learned.size();
  auto learned_at = [&](std::size_t t, std::size_t R) -> Eigen::Vector3d {
    if (L == R) return learned.waypoints[t].position;
    if (L == 1 || R == 1) return learned.waypoints[0].position;
    const double x = static_cast<double>(t) * static_cast<double>(L - 1) / static_cast<double>(R - 1);
    const auto i = std::min(static_cast<std::size_t>(x), L - 2);
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * learned.waypoints[i].position + f * learned.waypoints[i + 1].position;
  };
  for (const auto& ref : references) {
    if (ref.poses.empty()) throw DomainError("evaluate: empty reference");
    double sq = 0.0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      const double d = (learned_at(t, ref.size()) - ref.poses[t].position).norm();
      sq += d * d;
      m.max_deviation = std::max(m.max_deviation, d);
    }
    m.rmse.push_back(std::sqrt(sq / static_cast<double>(ref.size())));
  }
  m.mean_rmse = std::accumulate(m.rmse.begin(), m.rmse.end(), 0.0) / static_cast<double>(m.rmse.size());
  return m;
}

CorrectedPath mean_path(const std::vector<CorrectedPath>& paths) {
  if (paths.empty()) throw DomainError("mean_path: no paths");
  const std::size_t n = paths.front().size();
  for (const auto& p : paths)
    if (p.size() != n) throw DomainError("mean_path: length mismatch");
  CorrectedPath out;
  out.base_id = paths.front().base_id;
  out.provenance = paths.front().provenance;
  out.dt = paths.front().dt;
  out.poses.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    Eigen::Vector3d pos = Eigen::Vector3d::Zero(), s = Eigen::Vector3d::Zero(),
                    c = Eigen::Vector3d::Zero();
    for (const auto& p : paths) {
      pos += p.poses[t].position;
      s += p.poses[t].rpy.array().sin().matrix();
      c += p.poses[t].rpy.array().cos().matrix();
    }
    out.poses[t].position = pos / static_cast<double>(paths.size());
    for (int i = 0; i < 3; ++i) out.poses[t].rpy(i) = wrap_angle(std::atan2(s(i), c(i)));
  }
  return out;
}

bool smoothed_non_increasing(const std::vector<double>& trace, int window) {
  if (window < 1) throw DomainError("smoothed_non_increasing: window must be >= 1");
  const auto w = static_cast<std::size_t>(window);
  if (trace.size() <= w) return true;
  auto average = [&](std::size_t end) {
    return std::accumulate(trace.begin() + static_cast<long>(end - w), trace.begin() + static_cast<long>(end),
                           0.0) /
           window;
  };
  for (std::size_t end = w + 1; end <= trace.size(); ++end)
    if (average(end) > average(end - 1)) return false;
  return true;
}

}  // namespace beltforge
