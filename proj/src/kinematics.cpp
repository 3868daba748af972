#include "beltforge/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace beltforge {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kGimbalTolerance = 1e-12;
}  // namespace

Vector6d Pose::as_vector() const {
  Vector6d v;
  v << position, rpy;
  return v;
}

Pose Pose::from_vector(const Vector6d& v) {
  Pose p;
  p.position = v.head<3>();
  p.rpy = v.tail<3>();
  return p;
}

double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -M_PI) r += kTwoPi;
  return r;
}

double angle_difference(double to, double from) { return wrap_angle(to - from); }

void validate_pose(const Pose& pose) {
  if (!pose.position.allFinite() || !pose.rpy.allFinite())
    throw DomainError("pose: non-finite entry");
  for (int i = 0; i < 3; ++i) {
    if (!(pose.rpy(i) > -M_PI && pose.rpy(i) <= M_PI))
      throw DomainError("pose: angle outside (-pi, pi]");
  }
  if (std::abs(std::cos(pose.rpy(1))) < kGimbalTolerance)
    throw DomainError("pose: gimbal-degenerate pitch");
}

Eigen::Matrix3d rotation_from_rpy(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy(2), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy(1), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy(0), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d rpy_from_rotation(const Eigen::Matrix3d& r) {
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  if (cos_pitch < kGimbalTolerance) throw DomainError("orientation: gimbal-degenerate pitch");
  Eigen::Vector3d rpy(std::atan2(r(2, 1), r(2, 2)), std::atan2(-r(2, 0), cos_pitch),
                      std::atan2(r(1, 0), r(0, 0)));
  for (int i = 0; i < 3; ++i) rpy(i) = wrap_angle(rpy(i));
  return rpy;
}

void RobotDescription::validate() const {
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& lim = limits[static_cast<std::size_t>(i)];
    if (!(lim.lower <= lim.upper)) throw DomainError("robot: joint limit lower > upper");
  }
  for (const auto& s : spheres) {
    if (!(s.radius > 0.0)) throw DomainError("robot: collision sphere radius must be > 0");
    if (s.frame < 0 || s.frame > kNumJoints) throw DomainError("robot: sphere frame out of range");
  }
}

bool RobotDescription::within_limits(const JointConfig& q) const {
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& lim = limits[static_cast<std::size_t>(i)];
    if (!(q.q(i) >= lim.lower && q.q(i) <= lim.upper)) return false;
  }
  return true;
}

void Scene::validate() const {
  if (!(safety_margin >= 0.0)) throw DomainError("scene: safety_margin must be >= 0");
  if (pulley_a_center == pulley_b_center) throw DomainError("scene: pulley centers coincide");
  for (const auto& o : obstacles) {
    std::visit(
        [](const auto& prim) {
          using T = std::decay_t<decltype(prim)>;
          if constexpr (std::is_same_v<T, BoxObstacle>) {
            if (!(prim.half_extents.minCoeff() >= 0.0))
              throw DomainError("scene: negative box extent");
          } else {
            if (!(prim.radius > 0.0)) throw DomainError("scene: obstacle radius must be > 0");
          }
        },
        o);
  }
}

std::array<Eigen::Isometry3d, kNumJoints + 1> link_frames(const RobotDescription& robot,
                                                          const JointConfig& q) {
  std::array<Eigen::Isometry3d, kNumJoints + 1> frames;
  frames[0] = Eigen::Isometry3d::Identity();
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& row = robot.dh[static_cast<std::size_t>(i)];
    Eigen::Isometry3d link = Eigen::Isometry3d::Identity();
    link.rotate(Eigen::AngleAxisd(q.q(i) + row.theta_offset, Eigen::Vector3d::UnitZ()));
    link.translate(Eigen::Vector3d(row.a, 0.0, row.d));
    link.rotate(Eigen::AngleAxisd(row.alpha, Eigen::Vector3d::UnitX()));
    frames[static_cast<std::size_t>(i + 1)] = frames[static_cast<std::size_t>(i)] * link;
  }
  return frames;
}

namespace {

void require_limits(const RobotDescription& robot, const JointConfig& q, const char* who) {
  if (!robot.within_limits(q)) throw DomainError(std::string(who) + ": joint outside limits");
}

}  // namespace

Pose forward_kinematics(const RobotDescription& robot, const JointConfig& q) {
  require_limits(robot, q, "forward_kinematics");
  const auto frames = link_frames(robot, q);
  const auto& flange = frames[kNumJoints];
  Pose pose;
  pose.position = flange * robot.tool_offset;
  pose.rpy = rpy_from_rotation(flange.linear());
  return pose;
}

Eigen::Vector3d end_effector_position(const RobotDescription& robot, const JointConfig& q) {
  return link_frames(robot, q)[kNumJoints] * robot.tool_offset;
}

Matrix36d point_jacobian(const std::array<Eigen::Isometry3d, kNumJoints + 1>& frames, int frame,
                         const Eigen::Vector3d& world_point) {
  Matrix36d jac = Matrix36d::Zero();
  for (int i = 0; i < frame; ++i) {
    const auto& f = frames[static_cast<std::size_t>(i)];
    const Eigen::Vector3d axis = f.linear().col(2);
    jac.col(i) = axis.cross(world_point - f.translation());
  }
  return jac;
}

Matrix36d jacobian_position(const RobotDescription& robot, const JointConfig& q) {
  require_limits(robot, q, "jacobian_position");
  const auto frames = link_frames(robot, q);
  return point_jacobian(frames, kNumJoints, frames[kNumJoints] * robot.tool_offset);
}

double belt_displacement(const Scene& scene, const BeltParams& params, const Pose& ee) {
  return std::max(0.0, (ee.position - scene.belt_anchor).norm() - params.rest_length);
}

PointDistance point_signed_distance(const Obstacle& obstacle, const Eigen::Vector3d& point) {
  return std::visit(
      [&](const auto& prim) -> PointDistance {
        using T = std::decay_t<decltype(prim)>;
        if constexpr (std::is_same_v<T, SphereObstacle>) {
          const Eigen::Vector3d v = point - prim.center;
          const double n = v.norm();
          return {n - prim.radius, n > 0.0 ? Eigen::Vector3d(v / n) : Eigen::Vector3d::UnitZ()};
        } else if constexpr (std::is_same_v<T, BoxObstacle>) {
          const Eigen::Vector3d local = point - prim.center;
          const Eigen::Vector3d excess = local.cwiseAbs() - prim.half_extents;
          if ((excess.array() > 0.0).any()) {
            const Eigen::Vector3d clamped = local.cwiseMax(-prim.half_extents)
                                                .cwiseMin(prim.half_extents);
            const Eigen::Vector3d v = local - clamped;
            return {v.norm(), v.normalized()};
          }
          Eigen::Index axis = 0;
          const double depth = excess.maxCoeff(&axis);
          Eigen::Vector3d normal = Eigen::Vector3d::Zero();
          normal(axis) = local(axis) >= 0.0 ? 1.0 : -1.0;
          return {depth, normal};
        } else {
          const Eigen::Vector3d ab = prim.b - prim.a;
          const double len2 = ab.squaredNorm();
          const double t =
              len2 > 0.0 ? std::clamp((point - prim.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
          const Eigen::Vector3d v = point - (prim.a + t * ab);
          const double n = v.norm();
          return {n - prim.radius, n > 0.0 ? Eigen::Vector3d(v / n) : Eigen::Vector3d::UnitZ()};
        }
      },
      obstacle);
}

double sphere_sphere_distance(const Eigen::Vector3d& c1, double r1, const Eigen::Vector3d& c2,
                              double r2) {
  return (c1 - c2).norm() - (r1 + r2);
}

std::vector<DistanceQuery> pair_distances(
    const RobotDescription& robot, const Scene& scene,
    const std::array<Eigen::Isometry3d, kNumJoints + 1>& frames) {
  std::vector<DistanceQuery> out;
  out.reserve(robot.spheres.size() * scene.obstacles.size());
  for (std::size_t s = 0; s < robot.spheres.size(); ++s) {
    const auto& sphere = robot.spheres[s];
    const Eigen::Vector3d center = frames[static_cast<std::size_t>(sphere.frame)] * sphere.offset;
    for (std::size_t o = 0; o < scene.obstacles.size(); ++o) {
      DistanceQuery dq;
      if (const auto* ball = std::get_if<SphereObstacle>(&scene.obstacles[o])) {
        dq.distance = sphere_sphere_distance(center, sphere.radius, ball->center, ball->radius);
        const Eigen::Vector3d v = center - ball->center;
        dq.normal = v.norm() > 0.0 ? Eigen::Vector3d(v.normalized()) : Eigen::Vector3d::UnitZ();
      } else {
        const auto pd = point_signed_distance(scene.obstacles[o], center);
        dq.distance = pd.distance - sphere.radius;
        dq.normal = pd.normal;
      }
      dq.sphere_index = static_cast<int>(s);
      dq.obstacle_index = static_cast<int>(o);
      dq.sphere_center = center;
      out.push_back(dq);
    }
  }
  return out;
}

DistanceQuery signed_distance(const RobotDescription& robot, const Scene& scene,
                              const JointConfig& q) {
  require_limits(robot, q, "signed_distance");
  DistanceQuery best;
  for (const auto& dq : pair_distances(robot, scene, link_frames(robot, q))) {
    if (dq.distance < best.distance) best = dq;
  }
  return best;
}

}  // namespace beltforge
