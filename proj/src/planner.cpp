#include "beltforge/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "beltforge/hinge_qp.hpp"

namespace beltforge {

void PlanProblem::validate() const {
  robot.validate();
  scene.validate();
  if (segments < 3) throw DomainError("plan problem: need at least 3 segments");
  if (!(dt > 0.0)) throw DomainError("plan problem: dt must be > 0");
  if (!robot.within_limits(q_start)) throw DomainError("plan problem: start outside limits");
  if (!robot.within_limits(q_goal)) throw DomainError("plan problem: goal outside limits");
  if (via) {
    if (via->index < 0 || via->index > segments)
      throw DomainError("plan problem: via index out of range");
    if (!(via->tolerance >= 0.0)) throw DomainError("plan problem: negative via tolerance");
  }
  if (collision_substeps < 0) throw DomainError("plan problem: negative collision_substeps");
}

Path path_from_joints(const RobotDescription& robot, std::vector<JointConfig> joints, double dt) {
  Path path;
  path.dt = dt;
  path.waypoints.reserve(joints.size());
  for (const auto& q : joints) path.waypoints.push_back(forward_kinematics(robot, q));
  path.joints = std::move(joints);
  return path;
}

std::vector<JointConfig> linear_seed(const JointConfig& start, const JointConfig& goal,
                                     int segments) {
  std::vector<JointConfig> seed;
  seed.reserve(static_cast<std::size_t>(segments) + 1);
  seed.push_back(start);
  for (int t = 1; t < segments; ++t) {
    const double s = static_cast<double>(t) / segments;
    seed.emplace_back(Vector6d((1.0 - s) * start.q + s * goal.q));
  }
  seed.push_back(goal);
  return seed;
}

double joint_path_cost(const std::vector<JointConfig>& joints) {
  double cost = 0.0;
  for (std::size_t t = 1; t < joints.size(); ++t)
    cost += (joints[t].q - joints[t - 1].q).squaredNorm();
  return cost;
}

double joint_path_length(const std::vector<JointConfig>& joints) {
  double len = 0.0;
  for (std::size_t t = 1; t < joints.size(); ++t) len += (joints[t].q - joints[t - 1].q).norm();
  return len;
}

double WaypointConstraints::max_violation() const {
  return std::max({collision_violation, force_lower_violation, force_upper_violation,
                   via_violation});
}

double max_violation(const std::vector<WaypointConstraints>& constraints) {
  double v = 0.0;
  for (const auto& c : constraints) v = std::max(v, c.max_violation());
  return v;
}

namespace {

double hinge(double v) { return std::max(0.0, v); }

// Interior sample fractions of every segment.
std::vector<double> segment_fractions(const PlanProblem& problem) {
  std::vector<double> out;
  const int count = problem.collision_substeps;
  for (int k = 1; k <= count; ++k) out.push_back(static_cast<double>(k) / (count + 1));
  return out;
}

JointConfig interpolate(const JointConfig& a, const JointConfig& b, double s) {
  return JointConfig(Vector6d((1.0 - s) * a.q + s * b.q));
}

struct SegmentSample {
  double s;
  std::array<Eigen::Isometry3d, kNumJoints + 1> frames;
  std::vector<DistanceQuery> pairs;
};

// Kinematic quantities of one waypoint and of the segment ending at it.
struct WaypointState {
  std::array<Eigen::Isometry3d, kNumJoints + 1> frames;
  Eigen::Vector3d ee;
  std::vector<DistanceQuery> pairs;
  double stretch = 0.0;  // |ee - anchor| - rest_length, may be negative
  Eigen::Vector3d stretch_direction = Eigen::Vector3d::Zero();
  double displacement = 0.0;
  double rate = 0.0;
  double raw_force = 0.0;
  double force = 0.0;
  std::vector<SegmentSample> segment;
};

std::vector<WaypointState> evaluate_states(const PlanProblem& problem,
                                           const std::vector<JointConfig>& joints) {
  std::vector<WaypointState> states(joints.size());
  for (std::size_t t = 0; t < joints.size(); ++t) {
    auto& s = states[t];
    s.frames = link_frames(problem.robot, joints[t]);
    s.ee = s.frames[kNumJoints] * problem.robot.tool_offset;
    s.pairs = pair_distances(problem.robot, problem.scene, s.frames);
    const Eigen::Vector3d r = s.ee - problem.scene.belt_anchor;
    const double dist = r.norm();
    s.stretch = dist - problem.belt.rest_length;
    if (dist > 0.0) s.stretch_direction = r / dist;
    s.displacement = std::max(0.0, s.stretch);
    if (t == 0) continue;
    for (const double frac : segment_fractions(problem)) {
      SegmentSample sample;
      sample.s = frac;
      sample.frames = link_frames(problem.robot, interpolate(joints[t - 1], joints[t], sample.s));
      sample.pairs = pair_distances(problem.robot, problem.scene, sample.frames);
      s.segment.push_back(std::move(sample));
    }
  }
  for (std::size_t t = 0; t < states.size(); ++t) {
    auto& s = states[t];
    s.rate = t == 0 ? 0.0 : (s.displacement - states[t - 1].displacement) / problem.dt;
    const auto& b = problem.belt;
    s.raw_force =
        s.displacement == 0.0 ? 0.0 : std::pow(s.displacement, b.beta) * (b.k + b.lambda * s.rate);
    s.force = std::max(0.0, s.raw_force);
  }
  return states;
}

// For every sphere/obstacle pair, the interior sample of the segment where it
// comes closest. Only that sample is constrained, so the penalty does not grow
// with the number of samples and stays continuous in the waypoints.
std::vector<std::size_t> closest_samples(const WaypointState& state) {
  std::vector<std::size_t> best;
  if (state.segment.empty()) return best;
  best.assign(state.segment.front().pairs.size(), 0);
  for (std::size_t k = 1; k < state.segment.size(); ++k)
    for (std::size_t p = 0; p < best.size(); ++p)
      if (state.segment[k].pairs[p].distance < state.segment[best[p]].pairs[p].distance) best[p] = k;
  return best;
}

double via_distance(const PlanProblem& problem, const std::vector<WaypointState>& states) {
  const auto& via = *problem.via;
  return (states[static_cast<std::size_t>(via.index)].ee - via.position).norm();
}

// Sum of all l1 constraint violations (the penalty part of the merit).
double violation_sum(const PlanProblem& problem, const std::vector<WaypointState>& states) {
  const double margin = problem.scene.safety_margin;
  double sum = 0.0;
  for (const auto& s : states) {
    for (const auto& pair : s.pairs) sum += hinge(margin - pair.distance);
    const auto closest = closest_samples(s);
    for (std::size_t p = 0; p < closest.size(); ++p)
      sum += hinge(margin - s.segment[closest[p]].pairs[p].distance);
    if (std::isfinite(problem.bounds.f_upper)) sum += hinge(s.force - problem.bounds.f_upper);
    sum += hinge(problem.bounds.f_lower - s.force);
  }
  if (problem.via) sum += hinge(via_distance(problem, states) - problem.via->tolerance);
  return sum;
}

class ScoModel {
 public:
  ScoModel(const PlanProblem& problem, const SolverOptions& options)
      : problem_(problem), options_(options), interior_(problem.segments - 1) {
    n_ = kNumJoints * interior_;
    // Objective sum_t |q_{t+1} - q_t|^2 = 0.5 x'Hx + c'x + const with
    // H = 2 (L kron I6), L tridiagonal (2, -1).
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < interior_; ++i) {
      for (int d = 0; d < kNumJoints; ++d) {
        const int r = i * kNumJoints + d;
        trip.emplace_back(r, r, 4.0);
        if (i + 1 < interior_) {
          trip.emplace_back(r, r + kNumJoints, -2.0);
          trip.emplace_back(r + kNumJoints, r, -2.0);
        }
      }
    }
    hessian_.resize(n_, n_);
    hessian_.setFromTriplets(trip.begin(), trip.end());
    linear_ = Eigen::VectorXd::Zero(n_);
    linear_.segment<kNumJoints>(0) -= 2.0 * problem.q_start.q;
    linear_.segment<kNumJoints>(n_ - kNumJoints) -= 2.0 * problem.q_goal.q;

    joint_lower_.resize(n_);
    joint_upper_.resize(n_);
    for (int t = 0; t < interior_; ++t) {
      for (int d = 0; d < kNumJoints; ++d) {
        joint_lower_(t * kNumJoints + d) = problem.robot.limits[static_cast<std::size_t>(d)].lower;
        joint_upper_(t * kNumJoints + d) = problem.robot.limits[static_cast<std::size_t>(d)].upper;
      }
    }

    const auto& b = problem.bounds;
    double f_ref = 1.0;
    if (b.f_lower > 0.0) {
      f_ref = b.f_lower;
    } else if (std::isfinite(b.f_upper)) {
      f_ref = 0.5 * b.f_upper;
    }
    const double x_ref = std::pow(f_ref / problem.belt.k, 1.0 / problem.belt.beta);
    slack_slope_ = f_ref / x_ref;
  }

  int dimension() const { return n_; }

  std::vector<JointConfig> joints(const Eigen::VectorXd& x) const {
    std::vector<JointConfig> out;
    out.reserve(static_cast<std::size_t>(interior_) + 2);
    out.push_back(problem_.q_start);
    for (int t = 0; t < interior_; ++t)
      out.emplace_back(Vector6d(x.segment<kNumJoints>(t * kNumJoints)));
    out.push_back(problem_.q_goal);
    return out;
  }

  Eigen::VectorXd variables(const std::vector<JointConfig>& joints) const {
    Eigen::VectorXd x(n_);
    for (int t = 0; t < interior_; ++t)
      x.segment<kNumJoints>(t * kNumJoints) = joints[static_cast<std::size_t>(t) + 1].q;
    return x;
  }

  double objective(const Eigen::VectorXd& x) const { return joint_path_cost(joints(x)); }

  double merit(const Eigen::VectorXd& x, double penalty) const {
    const auto js = joints(x);
    return joint_path_cost(js) + penalty * violation_sum(problem_, evaluate_states(problem_, js));
  }

  struct Convexified {
    std::vector<SparseAffine> hinges;
    double constant_violation = 0.0;
  };

  Convexified convexify(const Eigen::VectorXd& x) const {
    const auto js = joints(x);
    const auto states = evaluate_states(problem_, js);
    Convexified out;
    const int last = problem_.segments;

    auto add = [&](double value, std::vector<std::pair<int, double>> coeffs,
                   const Eigen::VectorXd& at) {
      if (coeffs.empty()) {
        out.constant_violation += hinge(value);
        return;
      }
      SparseAffine term;
      term.constant = value;
      for (const auto& [i, a] : coeffs) term.constant -= a * at(i);
      term.coefficients = std::move(coeffs);
      out.hinges.push_back(std::move(term));
    };
    auto append_row = [&](std::vector<std::pair<int, double>>& coeffs, int t,
                          const Eigen::Matrix<double, 1, kNumJoints>& row) {
      if (t <= 0 || t >= last) return;
      for (int d = 0; d < kNumJoints; ++d)
        if (row(d) != 0.0) coeffs.emplace_back((t - 1) * kNumJoints + d, row(d));
    };

    const double margin = problem_.scene.safety_margin;
    const double cutoff = margin + options_.collision_buffer;
    for (int t = 0; t <= last; ++t) {
      const auto& s = states[static_cast<std::size_t>(t)];
      for (const auto& pair : s.pairs) {
        if (pair.distance >= cutoff) continue;
        std::vector<std::pair<int, double>> coeffs;
        const int frame = problem_.robot.spheres[static_cast<std::size_t>(pair.sphere_index)].frame;
        const Matrix36d jac = point_jacobian(s.frames, frame, pair.sphere_center);
        append_row(coeffs, t, -(pair.normal.transpose() * jac));
        add(margin - pair.distance, std::move(coeffs), x);
      }
      const auto closest = closest_samples(s);
      for (std::size_t p = 0; p < closest.size(); ++p) {
        const auto& sample = s.segment[closest[p]];
        const auto& pair = sample.pairs[p];
        if (pair.distance >= cutoff) continue;
        std::vector<std::pair<int, double>> coeffs;
        const int frame = problem_.robot.spheres[static_cast<std::size_t>(pair.sphere_index)].frame;
        const Eigen::Matrix<double, 1, kNumJoints> row =
            -(pair.normal.transpose() * point_jacobian(sample.frames, frame, pair.sphere_center));
        append_row(coeffs, t - 1, (1.0 - sample.s) * row);
        append_row(coeffs, t, sample.s * row);
        add(margin - pair.distance, std::move(coeffs), x);
      }
    }

    const auto& belt = problem_.belt;
    for (int t = 0; t <= last; ++t) {
      const auto& s = states[static_cast<std::size_t>(t)];
      const Matrix36d jac = point_jacobian(s.frames, kNumJoints, s.ee);
      const Eigen::Matrix<double, 1, kNumJoints> dstretch = s.stretch_direction.transpose() * jac;
      Eigen::Matrix<double, 1, kNumJoints> d_now = Eigen::Matrix<double, 1, kNumJoints>::Zero();
      Eigen::Matrix<double, 1, kNumJoints> d_prev = Eigen::Matrix<double, 1, kNumJoints>::Zero();
      if (s.displacement == 0.0 || s.raw_force <= 0.0) {
        // Slack or clamped: the true gradient vanishes, use the secant slope of
        // the force law so the subproblem can pull the belt taut.
        d_now = slack_slope_ * dstretch;
      } else {
        const auto g = belt_force_gradient(belt, s.displacement, s.rate);
        if (t == 0) {
          d_now = g.d_displacement * dstretch;
        } else {
          d_now = (g.d_displacement + g.d_rate / problem_.dt) * dstretch;
          const auto& prev = states[static_cast<std::size_t>(t) - 1];
          if (prev.displacement > 0.0) {
            const Matrix36d jac_prev = point_jacobian(prev.frames, kNumJoints, prev.ee);
            d_prev = (-g.d_rate / problem_.dt) * (prev.stretch_direction.transpose() * jac_prev);
          }
        }
      }
      std::vector<std::pair<int, double>> up;
      std::vector<std::pair<int, double>> low;
      append_row(up, t, d_now);
      if (t > 0) append_row(up, t - 1, d_prev);
      append_row(low, t, -d_now);
      if (t > 0) append_row(low, t - 1, -d_prev);
      if (std::isfinite(problem_.bounds.f_upper))
        add(s.force - problem_.bounds.f_upper, std::move(up), x);
      add(problem_.bounds.f_lower - s.force, std::move(low), x);
    }

    if (problem_.via) {
      const auto& via = *problem_.via;
      const auto& s = states[static_cast<std::size_t>(via.index)];
      const Eigen::Vector3d r = s.ee - via.position;
      const double dist = r.norm();
      std::vector<std::pair<int, double>> coeffs;
      if (dist > 0.0) {
        const Matrix36d jac = point_jacobian(s.frames, kNumJoints, s.ee);
        append_row(coeffs, via.index, (r / dist).transpose() * jac);
      }
      add(dist - via.tolerance, std::move(coeffs), x);
    }
    return out;
  }

  Eigen::VectorXd solve_subproblem(const Convexified& model, const Eigen::VectorXd& x,
                                   double penalty, double radius) const {
    HingeQp qp(hessian_, linear_);
    for (const auto& term : model.hinges) qp.add_hinge(term, penalty);
    const Eigen::VectorXd lo =
        (x.array() - radius).matrix().cwiseMax(joint_lower_).cwiseMin(joint_upper_);
    const Eigen::VectorXd hi =
        (x.array() + radius).matrix().cwiseMin(joint_upper_).cwiseMax(joint_lower_);
    qp.set_bounds(lo, hi);
    HingeQpOptions qo;
    qo.max_iterations = options_.qp_max_iterations;
    qo.tolerance = options_.qp_tolerance;
    return qp.solve(qo, &x).x;
  }

  double model_merit(const Convexified& model, const Eigen::VectorXd& x, double penalty) const {
    double v = model.constant_violation;
    for (const auto& term : model.hinges) v += hinge(term.eval(x));
    return objective(x) + penalty * v;
  }

 private:
  const PlanProblem& problem_;
  const SolverOptions& options_;
  int interior_;
  int n_ = 0;
  Eigen::SparseMatrix<double> hessian_;
  Eigen::VectorXd linear_;
  Eigen::VectorXd joint_lower_;
  Eigen::VectorXd joint_upper_;
  double slack_slope_ = 1.0;
};

}  // namespace

std::vector<WaypointConstraints> evaluate_constraints(const PlanProblem& problem,
                                                      const Path& path) {
  const std::size_t count = path.waypoints.size();
  if (path.has_joints() && path.joints.size() != count)
    throw DomainError("evaluate_constraints: joint/pose length mismatch");
  std::vector<WaypointConstraints> out(count);
  const auto& b = problem.belt;
  double prev_displacement = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    auto& c = out[t];
    c.displacement = belt_displacement(problem.scene, b, path.waypoints[t]);
    c.displacement_rate = t == 0 ? 0.0 : (c.displacement - prev_displacement) / path.dt;
    prev_displacement = c.displacement;
    c.belt_force = belt_force(b, c.displacement, c.displacement_rate);
    if (path.has_joints()) {
      for (const auto& pair :
           pair_distances(problem.robot, problem.scene, link_frames(problem.robot, path.joints[t])))
        c.clearance = std::min(c.clearance, pair.distance);
      const auto fractions = t == 0 ? std::vector<double>{} : segment_fractions(problem);
      for (const double frac : fractions) {
        const auto q = interpolate(path.joints[t - 1], path.joints[t], frac);
        for (const auto& pair :
             pair_distances(problem.robot, problem.scene, link_frames(problem.robot, q)))
          c.segment_clearance = std::min(c.segment_clearance, pair.distance);
      }
      c.collision_violation =
          hinge(problem.scene.safety_margin - std::min(c.clearance, c.segment_clearance));
    }
    c.force_lower_violation = hinge(problem.bounds.f_lower - c.belt_force);
    if (std::isfinite(problem.bounds.f_upper))
      c.force_upper_violation = hinge(c.belt_force - problem.bounds.f_upper);
    if (problem.via && static_cast<int>(t) == problem.via->index)
      c.via_violation =
          hinge((path.waypoints[t].position - problem.via->position).norm() - problem.via->tolerance);
  }
  return out;
}

PlanResult plan(const PlanProblem& problem, const SolverOptions& options) {
  problem.validate();
  ScoModel model(problem, options);
  const auto seed = linear_seed(problem.q_start, problem.q_goal, problem.segments);
  Eigen::VectorXd x = model.variables(seed);

  SolveReport report;
  double penalty = options.initial_penalty;
  auto finish = [&](const Eigen::VectorXd& xf) {
    Path path = path_from_joints(problem.robot, model.joints(xf), problem.dt);
    const auto constraints = evaluate_constraints(problem, path);
    report.max_violation = max_violation(constraints);
    report.objective = joint_path_cost(path.joints);
    report.final_merit = model.merit(xf, penalty);
    double seed_gap = 0.0;
    for (std::size_t t = 0; t < seed.size(); ++t)
      seed_gap = std::max(seed_gap, (path.joints[t].q - seed[t].q).cwiseAbs().maxCoeff());
    report.matches_linear_seed = seed_gap <= 1e-6;
    return std::make_pair(std::move(path), constraints);
  };

  for (int level = 0; level <= options.max_penalty_escalations; ++level) {
    report.penalty_trace.push_back(penalty);
    double radius = options.trust_region_initial;
    double merit = model.merit(x, penalty);
    report.merit_trace.push_back({penalty, radius, merit});

    for (int it = 0; it < options.max_iterations; ++it) {
      ++report.iterations;
      const auto convex = model.convexify(x);
      bool level_done = false;
      while (true) {
        const Eigen::VectorXd candidate = model.solve_subproblem(convex, x, penalty, radius);
        ++report.qp_solves;
        const double approx = merit - model.model_merit(convex, candidate, penalty);
        if (approx < options.min_approx_improve ||
            approx / std::max(std::abs(merit), 1e-12) < options.min_approx_improve_frac) {
          level_done = true;
          break;
        }
        const double new_merit = model.merit(candidate, penalty);
        const double exact = merit - new_merit;
        if (exact / approx > options.improve_ratio_threshold) {
          x = candidate;
          merit = new_merit;
          radius = std::min(radius * options.trust_expand, options.max_trust_region);
          report.trust_region_trace.push_back(radius);
          report.merit_trace.push_back({penalty, radius, merit});
          break;
        }
        radius *= options.trust_shrink;
        report.trust_region_trace.push_back(radius);
        if (radius < options.min_trust_region) {
          level_done = true;
          break;
        }
      }
      if (level_done) break;
    }

    auto [path, constraints] = finish(x);
    if (report.max_violation <= options.ctol) {
      report.converged = true;
      return {std::move(path), std::move(report)};
    }
    if (level < options.max_penalty_escalations) penalty *= options.penalty_scale;
  }
  auto [path, constraints] = finish(x);
  throw InfeasibleError("plan: constraints still violated after penalty escalation",
                        std::move(path), std::move(report), std::move(constraints));
}

std::vector<ViaVariation> random_via_variations(int count, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<ViaVariation> out(static_cast<std::size_t>(std::max(count, 0)));
  for (auto& v : out) {
    for (int i = 0; i < 3; ++i) v.offset(i) = normal(rng);
  }
  return out;
}

std::vector<BatchEntry> batch_plan(const PlanProblem& problem_template,
                                   const std::vector<ViaVariation>& variations,
                                   const SolverOptions& options) {
  if (variations.empty()) throw DomainError("batch_plan: need at least one variation");
  problem_template.validate();
  std::vector<BatchEntry> out;
  out.reserve(variations.size());
  // Offsets are applied around the plan of the template itself; the straight
  // seed may violate the force band in the middle of the path.
  std::optional<Path> nominal;
  auto nominal_path = [&]() -> const Path& {
    if (!nominal) {
      try {
        nominal = plan(problem_template, options).path;
      } catch (const InfeasibleError& e) {
        nominal = e.best();
      }
    }
    return *nominal;
  };
  for (std::size_t i = 0; i < variations.size(); ++i) {
    const auto& var = variations[i];
    PlanProblem problem = problem_template;
    if (problem.via) {
      problem.via->position += var.offset;
    } else if (!var.offset.isZero()) {
      ViaPoint via;
      via.index = var.index < 0 ? problem.segments / 2 : var.index;
      if (via.index <= 0 || via.index >= problem.segments)
        throw DomainError("batch_plan: via index must be an interior waypoint");
      via.position =
          nominal_path().waypoints[static_cast<std::size_t>(via.index)].position + var.offset;
      via.tolerance = var.tolerance;
      problem.via = via;
    }
    BatchEntry entry{i, std::nullopt, {}};
    try {
      entry.result = plan(problem, options);
    } catch (const InfeasibleError& e) {
      entry.error = e.what();
    } catch (const DomainError& e) {
      entry.error = e.what();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace beltforge
