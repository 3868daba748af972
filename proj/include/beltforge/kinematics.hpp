#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "beltforge/belt_model.hpp"

namespace beltforge {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix36d = Eigen::Matrix<double, 3, 6>;

inline constexpr int kNumJoints = 6;

struct JointConfig {
  Vector6d q = Vector6d::Zero();

  JointConfig() = default;
  explicit JointConfig(const Vector6d& values) : q(values) {}
  double operator[](int i) const { return q(i); }
  bool operator==(const JointConfig& other) const { return q == other.q; }
};

/// End-effector pose: position in metres, orientation as roll/pitch/yaw
/// (R = Rz(yaw) Ry(pitch) Rx(roll)), each angle in (-pi, pi].
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();

  Vector6d as_vector() const;
  static Pose from_vector(const Vector6d& v);
  bool operator==(const Pose& other) const {
    return position == other.position && rpy == other.rpy;
  }
};

/// Maps an angle to (-pi, pi].
double wrap_angle(double a);
/// Shortest signed difference to - from on the circle, in (-pi, pi].
double angle_difference(double to, double from);

/// Throws DomainError for non-finite entries, unnormalized angles or
/// gimbal-degenerate pitch.
void validate_pose(const Pose& pose);

Eigen::Matrix3d rotation_from_rpy(const Eigen::Vector3d& rpy);
/// Throws DomainError when |pitch| = pi/2.
Eigen::Vector3d rpy_from_rotation(const Eigen::Matrix3d& rotation);

// Standard Denavit-Hartenberg row: Rz(theta + theta_offset) Tz(d) Tx(a) Rx(alpha).
struct DhRow {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
};

struct JointLimit {
  double lower = -M_PI;
  double upper = M_PI;
};

struct CollisionSphere {
  int frame = kNumJoints;  // 0 = base, i = after joint i
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  double radius = 0.05;
};

struct RobotDescription {
  std::string name;
  std::array<DhRow, kNumJoints> dh{};
  std::array<JointLimit, kNumJoints> limits{};
  // End-effector point expressed in the flange frame.
  Eigen::Vector3d tool_offset = Eigen::Vector3d::Zero();
  std::vector<CollisionSphere> spheres;

  void validate() const;
  bool within_limits(const JointConfig& q) const;
};

struct SphereObstacle {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

struct BoxObstacle {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();
};

struct CapsuleObstacle {
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

using Obstacle = std::variant<SphereObstacle, BoxObstacle, CapsuleObstacle>;

struct Scene {
  std::vector<Obstacle> obstacles;
  Eigen::Vector3d pulley_a_center = Eigen::Vector3d::Zero();
  Eigen::Vector3d pulley_b_center = Eigen::Vector3d::UnitX();
  Eigen::Vector3d belt_anchor = Eigen::Vector3d::Zero();
  double safety_margin = 0.0;

  void validate() const;
};

/// Frame transforms of the chain: frames[0] is the base, frames[i] follows joint i.
std::array<Eigen::Isometry3d, kNumJoints + 1> link_frames(const RobotDescription& robot,
                                                          const JointConfig& q);

/// Throws DomainError if q is outside the joint limits.
Pose forward_kinematics(const RobotDescription& robot, const JointConfig& q);
Eigen::Vector3d end_effector_position(const RobotDescription& robot, const JointConfig& q);

/// d(end-effector position)/dq.
Matrix36d jacobian_position(const RobotDescription& robot, const JointConfig& q);

/// d(point rigidly attached to `frame`)/dq; columns past `frame` are zero.
Matrix36d point_jacobian(const std::array<Eigen::Isometry3d, kNumJoints + 1>& frames,
                         int frame, const Eigen::Vector3d& world_point);

double belt_displacement(const Scene& scene, const BeltParams& params, const Pose& ee);

/// Signed distance from a point to a primitive surface (negative inside), with
/// the outward unit gradient.
struct PointDistance {
  double distance;
  Eigen::Vector3d normal;
};
PointDistance point_signed_distance(const Obstacle& obstacle, const Eigen::Vector3d& point);

double sphere_sphere_distance(const Eigen::Vector3d& c1, double r1, const Eigen::Vector3d& c2,
                              double r2);

struct DistanceQuery {
  double distance = std::numeric_limits<double>::infinity();
  int sphere_index = -1;
  int obstacle_index = -1;
  // Unit direction along which increasing the sphere centre separates the pair.
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  Eigen::Vector3d sphere_center = Eigen::Vector3d::Zero();
};

/// All (robot sphere, obstacle) pair distances at q.
std::vector<DistanceQuery> pair_distances(const RobotDescription& robot, const Scene& scene,
                                          const std::array<Eigen::Isometry3d, kNumJoints + 1>&
                                              frames);

/// Minimum signed distance over all pairs; +inf with indices -1 when there
/// are no pairs.
DistanceQuery signed_distance(const RobotDescription& robot, const Scene& scene,
                              const JointConfig& q);

}  // namespace beltforge
