#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "beltforge/io.hpp"

namespace beltforge {

struct PlanSetup {
  JointConfig q_start;
  JointConfig q_goal;
  int segments = 30;
  double dt = 0.1;
  int collision_substeps = 1;
  std::optional<ViaPoint> via;
};

/// Everything a pipeline run needs. File references are resolved relative to
/// the config file.
struct PipelineConfig {
  std::filesystem::path source;
  RobotDescription robot;
  Scene scene;
  // CSV of displacement samples to fit; without it `belt` is used as is.
  std::optional<std::filesystem::path> belt_samples;
  BeltParams belt{1.0, 1.0, 0.0, 1.0};  // fixed params or the LM initial guess
  LmOptions lm;
  ForceBounds bounds{0.0, std::numeric_limits<double>::infinity()};
  PlanSetup plan;
  SolverOptions solver;
  int correction_count = 10;
  std::vector<CorrectionScenario> scenarios;
  int virtual_per_correction = 10;
  VirtualOptions augmentation;
  TrainOptions bc;
  // States are measured from this point (the target pulley by default).
  Eigen::Vector3d pulley_center = Eigen::Vector3d::Zero();
  std::uint64_t seed = 0;
  std::string output;
  // Content snapshot (robot, scene and sample hash inlined, no local paths).
  io::Json snapshot;

  PlanProblem problem(const BeltParams& belt_params) const;
};

/// Throws ConfigError / FormatError / IoError.
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace beltforge
