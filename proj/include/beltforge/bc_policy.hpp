#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beltforge/demo_pipeline.hpp"

namespace beltforge {

struct StateActionPair {
  Eigen::Vector3d state = Eigen::Vector3d::Zero();  // EE position - pulley center
  Vector6d action = Vector6d::Zero();               // target pose, base frame
};

/// Per-dimension affine normalisation, v_n = (v - mean) / scale.
struct Normalization {
  Eigen::Vector3d state_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d state_scale = Eigen::Vector3d::Ones();
  Vector6d action_mean = Vector6d::Zero();
  Vector6d action_scale = Vector6d::Ones();

  Eigen::Vector3d normalize_state(const Eigen::Vector3d& s) const;
  Eigen::Vector3d denormalize_state(const Eigen::Vector3d& s) const;
  Vector6d normalize_action(const Vector6d& a) const;
  Vector6d denormalize_action(const Vector6d& a) const;
};

struct DemonstrationDataset {
  std::vector<std::vector<StateActionPair>> demos;
  std::vector<std::string> source_ids;
  Normalization normalization;
  Eigen::Vector3d pulley_center = Eigen::Vector3d::Zero();

  std::size_t pair_count() const;
};

/// state_t = p_t.position - pulley_center, action_t = p_{t+1} (the last
/// waypoint holds its own pose), so that feeding the action's position back as
/// the next state walks the demonstration. Statistics use population standard
/// deviation; dimensions with zero spread get scale 1.
DemonstrationDataset build_dataset(const std::vector<CorrectedPath>& demos,
                                   const Eigen::Vector3d& pulley_center,
                                   std::vector<std::string> source_ids = {});

enum class Activation { kTanh, kLinear };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Feedforward net 3 -> hidden... -> 6 acting in normalised space; the output
/// layer is linear.
struct Policy {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kTanh;
  Normalization normalization;

  /// Raw state in, raw action out.
  Vector6d act(const Eigen::Vector3d& state) const;
  /// Columns are normalised states.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& states) const;
  std::size_t parameter_count() const;
  void validate() const;
};

/// Xavier-normal weights and zero biases.
Policy init_policy(const std::vector<int>& hidden, Activation activation,
                   const Normalization& normalization, std::uint64_t seed);

/// Mean over samples and output dimensions of the squared error, in
/// normalised space. Fills `gradient` (same shapes as the layers) if given.
double mse_loss(const Policy& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                std::vector<DenseLayer>* gradient = nullptr);

struct TrainOptions {
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::kTanh;
  int epochs = 2000;
  int batch_size = 64;
  double learning_rate = 3e-3;
  // Learning rate decays geometrically to learning_rate * final_rate_ratio.
  double final_rate_ratio = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Exponential moving average of the weights, updated after every step; the
  // averaged weights are returned and scored. 0 disables averaging.
  double weight_averaging = 0.999;

  void validate() const;
};

struct TrainResult {
  Policy policy;
  // Full-dataset loss before training and after every epoch.
  std::vector<double> loss_trace;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, std::vector<double> trace)
      : Error(ErrorCode::kTrainingDiverged, what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Minibatch Adam on the MSE with optional weight averaging. Throws
/// TrainingDivergedError when the loss exceeds 1e3 times its initial value or
/// becomes non-finite.
TrainResult train(const DemonstrationDataset& dataset, const TrainOptions& options,
                  std::uint64_t seed);

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-4) over all
/// parameters, numeric by central differences with step h. The floor keeps
/// parameters whose gradient vanishes from dividing round-off by ~0.
double policy_gradient_check(const Policy& policy, const std::vector<StateActionPair>& batch,
                             double h = 1e-6);

/// s_0 = start - c; a_t = policy(s_t); s_{t+1} = a_t.position - c. Returns the
/// `steps` actions a_0 .. a_{steps-1} as a pose-only path.
Path rollout(const Policy& policy, const Pose& start, const Eigen::Vector3d& pulley_center,
             int steps, double dt = 0.1);
/// The start pose followed by rollout(segments): segments + 1 waypoints,
/// aligned with a demonstration of the same length.
Path rollout_path(const Policy& policy, const Pose& start, const Eigen::Vector3d& pulley_center,
                  int segments, double dt = 0.1);

struct EvalMetrics {
  std::vector<double> rmse;  // per reference
  double mean_rmse = 0.0;
  double max_deviation = 0.0;
};

/// Position RMSE of `learned` against each reference. A learned path of a
/// different length is resampled onto the reference index by linear
/// interpolation.
EvalMetrics evaluate(const Path& learned, const std::vector<CorrectedPath>& references);

/// Pointwise mean of equally long paths (angles averaged as unit vectors).
CorrectedPath mean_path(const std::vector<CorrectedPath>& paths);

/// True when the `window`-point moving average of `trace` never increases.
bool smoothed_non_increasing(const std::vector<double>& trace, int window = 10);

}  // namespace beltforge
