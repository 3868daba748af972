#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beltforge/belt_model.hpp"
#include "beltforge/kinematics.hpp"

namespace beltforge {

/// Keeps the end-effector within `tolerance` of `position` at waypoint `index`.
struct ViaPoint {
  int index = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double tolerance = 0.01;
};

struct PlanProblem {
  RobotDescription robot;
  Scene scene;
  BeltParams belt;
  ForceBounds bounds;
  JointConfig q_start;
  JointConfig q_goal;
  int segments = 30;  // the path has segments + 1 waypoints
  double dt = 0.1;
  std::optional<ViaPoint> via;
  // Extra collision samples inside every segment, at s = k / (substeps + 1).
  int collision_substeps = 1;

  void validate() const;
};

/// Waypoint poses with, for planned paths, the joint configurations that
/// produced them. Pose-only paths (virtual or learned) leave `joints` empty.
struct Path {
  std::vector<Pose> waypoints;
  std::vector<JointConfig> joints;
  double dt = 0.1;

  bool has_joints() const { return !joints.empty(); }
  std::size_t size() const { return waypoints.size(); }
};

/// Builds a path from joint waypoints via forward kinematics.
Path path_from_joints(const RobotDescription& robot, std::vector<JointConfig> joints, double dt);

/// Linear joint interpolation with `segments` + 1 waypoints.
std::vector<JointConfig> linear_seed(const JointConfig& start, const JointConfig& goal,
                                     int segments);

/// Sum of squared joint steps.
double joint_path_cost(const std::vector<JointConfig>& joints);
/// Sum of joint step norms.
double joint_path_length(const std::vector<JointConfig>& joints);

struct SolverOptions {
  double initial_penalty = 10.0;
  double penalty_scale = 10.0;
  int max_penalty_escalations = 5;
  double trust_region_initial = 0.1;
  double trust_shrink = 0.5;
  double trust_expand = 1.5;
  double min_trust_region = 1e-4;
  double max_trust_region = 0.5;
  int max_iterations = 100;  // per penalty level
  double improve_ratio_threshold = 0.25;
  double min_approx_improve = 1e-7;
  double min_approx_improve_frac = 1e-7;
  double ctol = 1e-4;
  // Pairs closer than safety_margin + collision_buffer enter the subproblem.
  double collision_buffer = 0.05;
  int qp_max_iterations = 100;
  double qp_tolerance = 1e-10;
};

struct WaypointConstraints {
  double clearance = std::numeric_limits<double>::infinity();  // minimum signed distance
  // Minimum signed distance over the interior samples of the segment ending here.
  double segment_clearance = std::numeric_limits<double>::infinity();
  double displacement = 0.0;
  double displacement_rate = 0.0;
  double belt_force = 0.0;
  double collision_violation = 0.0;
  double force_lower_violation = 0.0;
  double force_upper_violation = 0.0;
  double via_violation = 0.0;

  double max_violation() const;
};

/// Exact constraint values along a path. Collision terms need joint waypoints;
/// pose-only paths report infinite clearance. The collision violation of a
/// waypoint also covers the interior samples of the segment ending at it.
std::vector<WaypointConstraints> evaluate_constraints(const PlanProblem& problem,
                                                      const Path& path);
double max_violation(const std::vector<WaypointConstraints>& constraints);

struct MeritRecord {
  double penalty;
  double trust_region;
  double merit;
};

struct SolveReport {
  int iterations = 0;
  int qp_solves = 0;
  double final_merit = 0.0;
  double max_violation = 0.0;
  double objective = 0.0;
  std::vector<double> penalty_trace;       // one entry per penalty level tried
  std::vector<double> trust_region_trace;  // radius after every subproblem
  std::vector<MeritRecord> merit_trace;    // start of each level + every accepted step
  bool converged = false;
  bool matches_linear_seed = false;
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, Path best, SolveReport report,
                  std::vector<WaypointConstraints> violations)
      : Error(ErrorCode::kInfeasible, what),
        best_(std::move(best)),
        report_(std::move(report)),
        violations_(std::move(violations)) {}
  const Path& best() const noexcept { return best_; }
  const SolveReport& report() const noexcept { return report_; }
  const std::vector<WaypointConstraints>& violations() const noexcept { return violations_; }

 private:
  Path best_;
  SolveReport report_;
  std::vector<WaypointConstraints> violations_;
};

struct PlanResult {
  Path path;
  SolveReport report;
};

/// Sequential convex optimisation with an l1 exact penalty and a box trust
/// region. Minimises the sum of squared joint steps subject to collision
/// clearance, the belt-force band and the optional via point at every
/// waypoint. Throws InfeasibleError when the penalty schedule is exhausted.
PlanResult plan(const PlanProblem& problem, const SolverOptions& options = {});

struct ViaVariation {
  int index = -1;  // -1: middle waypoint
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  double tolerance = 0.01;
};

/// `count` variations with offsets drawn from N(0, sigma^2 I).
std::vector<ViaVariation> random_via_variations(int count, double sigma, std::uint64_t seed);

struct BatchEntry {
  std::size_t variation;
  std::optional<PlanResult> result;
  std::string error;
};

/// One plan per variation. The via target is the template's via point (or,
/// when the template has none, the waypoint at `index` of the template's own
/// plan) shifted by the offset; a zero offset on a template without via leaves
/// the template as is.
std::vector<BatchEntry> batch_plan(const PlanProblem& problem_template,
                                   const std::vector<ViaVariation>& variations,
                                   const SolverOptions& options = {});

}  // namespace beltforge
