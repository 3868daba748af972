#pragma once

#include <array>
#include <numeric>
#include <queue>

#include "beltforge/config.hpp"

namespace beltforge::testing {

inline std::filesystem::path config_dir() { return BELTFORGE_CONFIG_DIR; }
inline std::filesystem::path data_dir() { return BELTFORGE_TEST_DATA_DIR; }

inline RobotDescription ur10e() { return io::robot_from_json(io::read_file(config_dir() / "robot_ur10e.json")); }
inline Scene default_scene() { return io::scene_from_json(io::read_file(config_dir() / "scene_default.json")); }

inline const PipelineConfig& default_config() {
  static const PipelineConfig c = load_config(config_dir() / "pipeline_default.json");
  return c;
}

// The belt the default samples were generated from.
inline BeltParams default_belt() { return BeltParams(60.0, 1.3, 5.0, default_config().belt.rest_length); }

inline PlanProblem default_problem(ForceBounds bounds = ForceBounds(3.0, 12.0)) {
  PlanProblem p = default_config().problem(default_belt());
  p.bounds = bounds;
  return p;
}

inline PlanProblem planar_problem() {
  const PipelineConfig c = load_config(config_dir() / "planar_benchmark.json");
  return c.problem(c.belt);
}

inline Vector6d q6(double a, double b, double c = 0, double d = 0, double e = 0, double f = 0) {
  Vector6d v;
  v << a, b, c, d, e, f;
  return v;
}

// Shortest collision-free path between two configurations of a robot whose
// only free joints are 0 and 1. Dijkstra over an n x n grid of [-pi, pi]^2,
// 32-connected (steps (a, b) with |a|, |b| <= 3, gcd 1), feasibility checked at
// nodes against the scene margin. Start and goal snap to the nearest node.
inline double grid_shortest_path(const RobotDescription& robot, const Scene& scene, const JointConfig& start,
                                 const JointConfig& goal, int n = 400) {
  const double lo = -M_PI, h = 2 * M_PI / (n - 1);
  std::vector<char> free(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      free[i * n + j] = signed_distance(robot, scene, JointConfig(q6(lo + i * h, lo + j * h))).distance >=
                        scene.safety_margin;
  const auto node = [&](const JointConfig& q) {
    return static_cast<int>(std::lround((q[0] - lo) / h)) * n + static_cast<int>(std::lround((q[1] - lo) / h));
  };
  std::vector<std::array<int, 2>> steps;
  for (int a = -3; a <= 3; ++a)
    for (int b = -3; b <= 3; ++b)
      if ((a || b) && std::gcd(a, b) == 1) steps.push_back({a, b});

  std::vector<double> dist(free.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const int s = node(start), g = node(goal);
  dist[s] = 0;
  pq.push({0, s});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == g) break;
    const int i = u / n, j = u % n;
    for (const auto& st : steps) {
      const int a = i + st[0], b = j + st[1];
      if (a < 0 || b < 0 || a >= n || b >= n || !free[a * n + b]) continue;
      const double nd = d + h * std::hypot(st[0], st[1]);
      if (nd < dist[a * n + b]) {
        dist[a * n + b] = nd;
        pq.push({nd, a * n + b});
      }
    }
  }
  return dist[g];
}

// Minimum clearance along straight joint segments, checked at `per_segment`
// points per segment.
inline double dense_clearance(const RobotDescription& robot, const Scene& scene,
                              const std::vector<JointConfig>& joints, int per_segment = 50) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < joints.size(); ++t)
    for (int k = 0; k <= per_segment; ++k) {
      const double s = static_cast<double>(k) / per_segment;
      const JointConfig q(joints[t].q + s * (joints[t + 1].q - joints[t].q));
      m = std::min(m, signed_distance(robot, scene, q).distance);
    }
  return m;
}

// Ten bump corrections of `offline` (3 cm in z, mid path, jittered), the
// end-to-end fixture's stand-in for human corrections.
inline std::vector<CorrectedPath> bump_corrections(const Path& offline, int count = 10) {
  CorrectionScenario s;
  s.kind = ScenarioKind::kBump;
  s.amplitude << 0, 0, 0.03, 0, 0, 0;
  s.center = 0.5;
  s.width = 0.1;
  s.amplitude_jitter = 0.2;
  s.center_jitter = 0.05;
  std::vector<CorrectedPath> out;
  for (int i = 0; i < count; ++i) out.push_back(synthesize_correction(offline, s, 1000 + i, "offline"));
  return out;
}

}  // namespace beltforge::testing
