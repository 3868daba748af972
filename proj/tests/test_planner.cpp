#include "doctest.h"
#include "fixtures.hpp"

using namespace beltforge;
using beltforge::testing::q6;

namespace {

PlanProblem open_problem() {
  PlanProblem p = testing::default_problem(ForceBounds(0, std::numeric_limits<double>::infinity()));
  p.scene.obstacles.clear();
  return p;
}

void check_merit_monotone(const SolveReport& r) {
  for (std::size_t i = 1; i < r.merit_trace.size(); ++i)
    if (r.merit_trace[i].penalty == r.merit_trace[i - 1].penalty)
      CHECK(r.merit_trace[i].merit <= r.merit_trace[i - 1].merit + 1e-12);
}

}  // namespace

TEST_CASE("linear seed and path length helpers") {
  const auto seed = linear_seed(JointConfig(q6(0, 0)), JointConfig(q6(1, 2)), 4);
  REQUIRE(seed.size() == 5);
  CHECK(seed[2][0] == doctest::Approx(0.5));
  CHECK(joint_path_length(seed) == doctest::Approx(std::sqrt(5.0)));
  CHECK(joint_path_cost(seed) == doctest::Approx(5.0 / 4));
}

TEST_CASE("problem validation") {
  PlanProblem p = open_problem();
  p.segments = 2;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = open_problem();
  p.dt = 0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = open_problem();
  p.robot.limits[0] = {-0.5, 0.5};
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = open_problem();
  p.via = ViaPoint{p.segments + 1, {0, 0, 0}, 0.01};
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("unconstrained plan is the straight joint line") {
  const PlanProblem p = open_problem();
  const auto r = plan(p);
  CHECK(r.report.converged);
  CHECK(r.report.matches_linear_seed);
  const auto seed = linear_seed(p.q_start, p.q_goal, p.segments);
  REQUIRE(r.path.joints.size() == seed.size());
  for (std::size_t t = 0; t < seed.size(); ++t) CHECK((r.path.joints[t].q - seed[t].q).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(max_violation(evaluate_constraints(p, r.path)) == 0.0);
}

TEST_CASE("evaluate_constraints definitions") {
  PlanProblem p = open_problem();
  p.bounds = ForceBounds(5, 8);
  Path path = path_from_joints(p.robot, linear_seed(p.q_start, p.q_goal, p.segments), p.dt);
  // every pose equals forward kinematics of its joint waypoint
  for (std::size_t t = 0; t < path.size(); ++t)
    CHECK((path.waypoints[t].position - forward_kinematics(p.robot, path.joints[t]).position).norm() <= 1e-9);

  // slack belt everywhere: lower-bound violation equals f_lower
  p.belt = BeltParams(p.belt.k, p.belt.beta, p.belt.lambda, 100.0);
  const auto slack = evaluate_constraints(p, path);
  for (const auto& c : slack) {
    CHECK(c.displacement == 0.0);
    CHECK(c.belt_force == 0.0);
    CHECK(c.force_lower_violation == doctest::Approx(5.0));
  }
  CHECK(slack.front().displacement_rate == 0.0);

  // an obstacle on the path gives negative margins where it penetrates
  PlanProblem q = open_problem();
  q.scene.obstacles.push_back(SphereObstacle{path.waypoints[15].position, 0.1});
  const auto hit = evaluate_constraints(q, path);
  CHECK(hit[15].clearance < 0);
  CHECK(hit[15].collision_violation == doctest::Approx(q.scene.safety_margin - hit[15].clearance));
  CHECK(hit.front().clearance > 0);

  // pose-only paths skip collision terms
  Path poses = path;
  poses.joints.clear();
  CHECK(std::isinf(evaluate_constraints(q, poses)[15].clearance));
}

TEST_CASE("rate uses backward differences") {
  const PlanProblem p = testing::default_problem();
  const Path path = path_from_joints(p.robot, linear_seed(p.q_start, p.q_goal, p.segments), p.dt);
  const auto c = evaluate_constraints(p, path);
  for (std::size_t t = 1; t < c.size(); ++t) {
    CHECK(c[t].displacement_rate == doctest::Approx((c[t].displacement - c[t - 1].displacement) / p.dt));
    CHECK(c[t].belt_force == doctest::Approx(belt_force(p.belt, c[t].displacement, c[t].displacement_rate)));
  }
}

TEST_CASE("default scene plan satisfies its constraints") {
  const PlanProblem p = testing::default_problem();
  const auto r = plan(p);
  REQUIRE(r.report.converged);
  const auto c = evaluate_constraints(p, r.path);
  CHECK(max_violation(c) <= SolverOptions{}.ctol);
  CHECK(r.report.max_violation >= 0);
  CHECK(r.path.joints.front() == p.q_start);
  CHECK(r.path.joints.back() == p.q_goal);
  check_merit_monotone(r.report);
  CHECK_FALSE(r.report.penalty_trace.empty());
  CHECK_FALSE(r.report.trust_region_trace.empty());

  // determinism
  const auto again = plan(p);
  for (std::size_t t = 0; t < r.path.size(); ++t) CHECK(again.path.joints[t] == r.path.joints[t]);

  // the straight seed is feasible here, so planning cannot lengthen it
  const auto seed = linear_seed(p.q_start, p.q_goal, p.segments);
  if (max_violation(evaluate_constraints(p, path_from_joints(p.robot, seed, p.dt))) == 0.0)
    CHECK(joint_path_cost(r.path.joints) <= joint_path_cost(seed) + 1e-12);
}

TEST_CASE("via point is honoured") {
  PlanProblem p = testing::default_problem();
  const auto nominal = plan(p).path;
  p.via = ViaPoint{15, nominal.waypoints[15].position + Eigen::Vector3d(0, 0, 0.03), 0.005};
  const auto r = plan(p);
  REQUIRE(r.report.converged);
  CHECK((r.path.waypoints[15].position - p.via->position).norm() <= 0.005 + 1e-4);
}

TEST_CASE("batch plan") {
  const PlanProblem p = testing::default_problem();
  SUBCASE("a single zero variation reproduces plan") {
    const auto batch = batch_plan(p, {ViaVariation{}});
    REQUIRE(batch.size() == 1);
    REQUIRE(batch[0].result);
    const auto single = plan(p);
    for (std::size_t t = 0; t < single.path.size(); ++t) CHECK(batch[0].result->path.joints[t] == single.path.joints[t]);
  }
  SUBCASE("variations inside an obstacle are all infeasible") {
    PlanProblem q = p;
    const auto nominal = plan(p).path;
    const Eigen::Vector3d centre = nominal.waypoints[15].position + Eigen::Vector3d(0.0, 0.0, 0.3);
    q.scene.obstacles.push_back(SphereObstacle{centre, 0.1});
    std::vector<ViaVariation> vars(3);
    for (int i = 0; i < 3; ++i) {
      vars[i].offset = centre - nominal.waypoints[15].position + Eigen::Vector3d(0.01 * i, 0, 0);
      vars[i].tolerance = 0.005;
    }
    const auto batch = batch_plan(q, vars);
    for (const auto& e : batch) {
      CHECK_FALSE(e.result);
      CHECK_FALSE(e.error.empty());
    }
  }
  SUBCASE("variations are reproducible") {
    const auto a = random_via_variations(5, 0.02, 3), b = random_via_variations(5, 0.02, 3);
    for (int i = 0; i < 5; ++i) CHECK(a[i].offset == b[i].offset);
  }
}

TEST_CASE("twenty seeded via perturbations on the default scene" * doctest::timeout(300)) {
  const auto batch = batch_plan(testing::default_problem(), random_via_variations(20, 0.02, 7));
  int ok = 0;
  for (const auto& e : batch) ok += e.result.has_value();
  CHECK(ok >= 18);
}

TEST_CASE("infeasible problem reports its best path") {
  PlanProblem p = testing::default_problem(ForceBounds(200, 300));
  SolverOptions o;
  o.max_penalty_escalations = 1;
  try {
    plan(p, o);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(e.code() == ErrorCode::kInfeasible);
    CHECK(e.best().size() == static_cast<std::size_t>(p.segments + 1));
    CHECK(max_violation(e.violations()) > o.ctol);
    CHECK_FALSE(e.report().converged);
  }
}
