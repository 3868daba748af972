#include "doctest.h"
#include "fixtures.hpp"

using namespace beltforge;

namespace {

template <class T, class F>
void check_round_trip(const T& value, F from_json) {
  const std::string text = io::dump(io::to_json(value));
  CHECK(io::dump(io::to_json(from_json(io::parse(text)))) == text);
}

}  // namespace

TEST_CASE("canonical dump sorts keys and ends with a newline") {
  const io::Json j = {{"b", 1}, {"a", {{"d", 0.1}, {"c", true}}}};
  const std::string s = io::dump(j);
  CHECK(s.back() == '\n');
  CHECK(s.find("\"a\"") < s.find("\"b\""));
  CHECK(io::dump(io::parse(s)) == s);
  CHECK_THROWS_AS(io::parse("{not json"), FormatError);
  CHECK_THROWS_AS(io::read_file("/nonexistent/file.json"), IoError);
}

TEST_CASE("schema check") {
  CHECK_NOTHROW(io::check_schema({{"schema", io::kSchema}}));
  CHECK_THROWS_AS(io::check_schema({{"schema", "belt-forge/0"}}), FormatError);
  CHECK_THROWS_AS(io::check_schema(io::Json::object()), FormatError);
}

TEST_CASE("robot, scene and parameters round trip") {
  check_round_trip(testing::ur10e(), io::robot_from_json);
  check_round_trip(testing::default_scene(), io::scene_from_json);
  Scene s;
  s.obstacles.push_back(CapsuleObstacle{{0, 0, 0}, {1, 0, 0}, 0.1});
  check_round_trip(s, io::scene_from_json);
  check_round_trip(BeltParams(60, 1.3, 5, 0.8), io::belt_from_json);
  check_round_trip(ForceBounds(0, std::numeric_limits<double>::infinity()), io::bounds_from_json);
  CHECK(io::to_json(ForceBounds(0, std::numeric_limits<double>::infinity()))["f_upper"].is_null());
  check_round_trip(TrainOptions{}, [](const io::Json& j) { return io::train_options_from_json(j); });
  check_round_trip(VirtualOptions{7, 1e-3, true}, [](const io::Json& j) { return io::virtual_options_from_json(j); });
  CorrectionScenario sc;
  sc.kind = ScenarioKind::kWaypointDrag;
  sc.amplitude << 0.01, 0.02, 0.03, 0.1, 0, 0;
  check_round_trip(sc, io::scenario_from_json);
}

TEST_CASE("solver option overrides") {
  const auto o = io::solver_options_from_json({{"ctol", 1e-5}, {"max_iterations", 7}});
  CHECK(o.ctol == 1e-5);
  CHECK(o.max_iterations == 7);
  CHECK(o.trust_region_initial == SolverOptions{}.trust_region_initial);
  CHECK_THROWS_AS(io::solver_options_from_json(io::Json::array()), FormatError);
}

TEST_CASE("paths and policies round trip byte for byte") {
  const PlanProblem p = testing::default_problem();
  const Path path = path_from_joints(p.robot, linear_seed(p.q_start, p.q_goal, 10), 0.1);
  check_round_trip(path, io::path_from_json);
  CHECK(io::to_json(path)["waypoints"][0].contains("q"));

  CorrectedPath c{"abc", path.waypoints, Provenance::kHuman, 0.1};
  c.poses[4].position.z() += 0.01;
  const auto delta = extract_correction(path, c);
  const std::string text = io::dump(io::to_json(c, delta));
  const auto back = io::corrected_path_from_json(io::parse(text));
  CHECK(back.base_id == "abc");
  CHECK(back.provenance == Provenance::kHuman);
  for (std::size_t t = 0; t < c.size(); ++t) CHECK(back.poses[t] == c.poses[t]);
  CHECK(io::dump(io::to_json(back, extract_correction(path, back))) == text);

  const auto ds = build_dataset({c}, Eigen::Vector3d(0.1, 0, 0), {"x"});
  check_round_trip(ds, io::dataset_from_json);
  check_round_trip(init_policy({8, 4}, Activation::kTanh, ds.normalization, 3), io::policy_from_json);
}

TEST_CASE("malformed documents are format errors") {
  CHECK_THROWS_AS(io::path_from_json({{"dt", 0.1}}), FormatError);
  CHECK_THROWS_AS(io::pose_from_json({{"xyz", {1, 2}}, {"rpy", {0, 0, 0}}}), FormatError);
  CHECK_THROWS_AS(io::scene_from_json({{"obstacles", {{{"type", "torus"}}}}}), FormatError);
  CHECK_THROWS_AS(io::vector_from_json({1, "a"}), FormatError);
}
