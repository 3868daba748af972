#include "beltforge/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace beltforge::io {

namespace {

template <typename T>
T get(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key);
}

Json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::Vector3d vec3(const Json& j) { return vector_from_json(j, 3); }
Vector6d vec6(const Json& j) { return vector_from_json(j, 6); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
}

Json read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void check_schema(const Json& j) {
  if (!j.is_object() || !j.contains("schema")) throw FormatError("missing schema field");
  if (!j["schema"].is_string() || j["schema"].get<std::string>() != kSchema)
    throw FormatError("schema mismatch: expected " + std::string(kSchema) + ", got " + j["schema"].dump());
}

Json to_json(const Eigen::VectorXd& v) { return vec(v); }

Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index expected) {
  if (!j.is_array()) throw FormatError("expected a numeric array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected)
    throw FormatError("expected an array of length " + std::to_string(expected));
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError("expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

JointConfig joint_from_json(const Json& j) { return JointConfig(vec6(j)); }
Json to_json(const JointConfig& q) { return vec(q.q); }

Json to_json(const RobotDescription& robot) {
  Json dh = Json::array(), limits = Json::array(), spheres = Json::array();
  for (const auto& row : robot.dh)
    dh.push_back({{"a", row.a}, {"alpha", row.alpha}, {"d", row.d}, {"theta_offset", row.theta_offset}});
  for (const auto& l : robot.limits) limits.push_back({l.lower, l.upper});
  for (const auto& s : robot.spheres)
    spheres.push_back({{"frame", s.frame}, {"offset", vec(s.offset)}, {"radius", s.radius}});
  return {{"name", robot.name}, {"dh", dh},           {"limits", limits},
          {"tool_offset", vec(robot.tool_offset)}, {"spheres", spheres}};
}

RobotDescription robot_from_json(const Json& j) {
  RobotDescription r;
  r.name = get_or<std::string>(j, "name", "robot");
  const Json& dh = field(j, "dh");
  if (!dh.is_array() || dh.size() != kNumJoints) throw FormatError("robot: 'dh' needs 6 rows");
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    r.dh[i].a = get_or(dh[i], "a", 0.0);
    r.dh[i].alpha = get_or(dh[i], "alpha", 0.0);
    r.dh[i].d = get_or(dh[i], "d", 0.0);
    r.dh[i].theta_offset = get_or(dh[i], "theta_offset", 0.0);
  }
  if (j.contains("limits")) {
    const Json& lim = j["limits"];
    if (!lim.is_array() || lim.size() != kNumJoints) throw FormatError("robot: 'limits' needs 6 pairs");
    for (std::size_t i = 0; i < kNumJoints; ++i) {
      const auto v = vector_from_json(lim[i], 2);
      r.limits[i] = {v(0), v(1)};
    }
  }
  if (j.contains("tool_offset")) r.tool_offset = vec3(j["tool_offset"]);
  if (j.contains("spheres")) {
    for (const auto& s : j["spheres"])
      r.spheres.push_back({get<int>(s, "frame"), vec3(field(s, "offset")), get<double>(s, "radius")});
  }
  r.validate();
  return r;
}

Json to_json(const Scene& scene) {
  Json obstacles = Json::array();
  for (const auto& o : scene.obstacles) {
    std::visit(
        [&](const auto& prim) {
          using T = std::decay_t<decltype(prim)>;
          if constexpr (std::is_same_v<T, SphereObstacle>)
            obstacles.push_back({{"type", "sphere"}, {"center", vec(prim.center)}, {"radius", prim.radius}});
          else if constexpr (std::is_same_v<T, BoxObstacle>)
            obstacles.push_back(
                {{"type", "box"}, {"center", vec(prim.center)}, {"half_extents", vec(prim.half_extents)}});
          else
            obstacles.push_back(
                {{"type", "capsule"}, {"a", vec(prim.a)}, {"b", vec(prim.b)}, {"radius", prim.radius}});
        },
        o);
  }
  return {{"obstacles", obstacles},
          {"pulley_a_center", vec(scene.pulley_a_center)},
          {"pulley_b_center", vec(scene.pulley_b_center)},
          {"belt_anchor", vec(scene.belt_anchor)},
          {"safety_margin", scene.safety_margin}};
}

Scene scene_from_json(const Json& j) {
  Scene s;
  if (j.contains("obstacles")) {
    for (const auto& o : j["obstacles"]) {
      const auto type = get<std::string>(o, "type");
      if (type == "sphere")
        s.obstacles.emplace_back(SphereObstacle{vec3(field(o, "center")), get<double>(o, "radius")});
      else if (type == "box")
        s.obstacles.emplace_back(BoxObstacle{vec3(field(o, "center")), vec3(field(o, "half_extents"))});
      else if (type == "capsule")
        s.obstacles.emplace_back(
            CapsuleObstacle{vec3(field(o, "a")), vec3(field(o, "b")), get<double>(o, "radius")});
      else
        throw FormatError("scene: unknown obstacle type '" + type + "'");
    }
  }
  s.pulley_a_center = vec3(field(j, "pulley_a_center"));
  s.pulley_b_center = vec3(field(j, "pulley_b_center"));
  s.belt_anchor = j.contains("belt_anchor") ? vec3(j["belt_anchor"]) : s.pulley_a_center;
  s.safety_margin = get_or(j, "safety_margin", 0.0);
  s.validate();
  return s;
}

Json to_json(const BeltParams& p) {
  return {{"k", p.k}, {"beta", p.beta}, {"lambda", p.lambda}, {"rest_length", p.rest_length}};
}

BeltParams belt_from_json(const Json& j) {
  return BeltParams(get<double>(j, "k"), get<double>(j, "beta"), get<double>(j, "lambda"),
                    get<double>(j, "rest_length"));
}

Json to_json(const ForceBounds& b) {
  return {{"f_lower", b.f_lower}, {"f_upper", std::isfinite(b.f_upper) ? Json(b.f_upper) : Json(nullptr)}};
}

ForceBounds bounds_from_json(const Json& j) {
  const double upper = j.contains("f_upper") && !j["f_upper"].is_null()
                           ? get<double>(j, "f_upper")
                           : std::numeric_limits<double>::infinity();
  return ForceBounds(get_or(j, "f_lower", 0.0), upper);
}

Json to_json(const FitReport& r) {
  return {{"initial_sse", r.initial_sse},   {"final_sse", r.final_sse}, {"iterations", r.iterations},
          {"accepted_steps", r.accepted_steps}, {"sse_trace", r.sse_trace}};
}

SolverOptions solver_options_from_json(const Json& j, SolverOptions o) {
  if (j.is_null()) return o;
  if (!j.is_object()) throw FormatError("solver options must be an object");
  o.initial_penalty = get_or(j, "initial_penalty", o.initial_penalty);
  o.penalty_scale = get_or(j, "penalty_scale", o.penalty_scale);
  o.max_penalty_escalations = get_or(j, "max_penalty_escalations", o.max_penalty_escalations);
  o.trust_region_initial = get_or(j, "trust_region_initial", o.trust_region_initial);
  o.trust_shrink = get_or(j, "trust_shrink", o.trust_shrink);
  o.trust_expand = get_or(j, "trust_expand", o.trust_expand);
  o.min_trust_region = get_or(j, "min_trust_region", o.min_trust_region);
  o.max_trust_region = get_or(j, "max_trust_region", o.max_trust_region);
  o.max_iterations = get_or(j, "max_iterations", o.max_iterations);
  o.improve_ratio_threshold = get_or(j, "improve_ratio_threshold", o.improve_ratio_threshold);
  o.min_approx_improve = get_or(j, "min_approx_improve", o.min_approx_improve);
  o.min_approx_improve_frac = get_or(j, "min_approx_improve_frac", o.min_approx_improve_frac);
  o.ctol = get_or(j, "ctol", o.ctol);
  o.collision_buffer = get_or(j, "collision_buffer", o.collision_buffer);
  o.qp_max_iterations = get_or(j, "qp_max_iterations", o.qp_max_iterations);
  o.qp_tolerance = get_or(j, "qp_tolerance", o.qp_tolerance);
  return o;
}

Json to_json(const SolverOptions& o) {
  return {{"initial_penalty", o.initial_penalty},
          {"penalty_scale", o.penalty_scale},
          {"max_penalty_escalations", o.max_penalty_escalations},
          {"trust_region_initial", o.trust_region_initial},
          {"trust_shrink", o.trust_shrink},
          {"trust_expand", o.trust_expand},
          {"min_trust_region", o.min_trust_region},
          {"max_trust_region", o.max_trust_region},
          {"max_iterations", o.max_iterations},
          {"improve_ratio_threshold", o.improve_ratio_threshold},
          {"min_approx_improve", o.min_approx_improve},
          {"min_approx_improve_frac", o.min_approx_improve_frac},
          {"ctol", o.ctol},
          {"collision_buffer", o.collision_buffer},
          {"qp_max_iterations", o.qp_max_iterations},
          {"qp_tolerance", o.qp_tolerance}};
}

Json to_json(const SolveReport& r) {
  Json merit = Json::array();
  for (const auto& m : r.merit_trace) merit.push_back({m.penalty, m.trust_region, m.merit});
  return {{"iterations", r.iterations},
          {"qp_solves", r.qp_solves},
          {"final_merit", r.final_merit},
          {"max_violation", r.max_violation},
          {"objective", r.objective},
          {"penalty_trace", r.penalty_trace},
          {"trust_region_trace", r.trust_region_trace},
          {"merit_trace", merit},
          {"converged", r.converged},
          {"matches_linear_seed", r.matches_linear_seed}};
}

Json to_json(const Pose& p) { return {{"xyz", vec(p.position)}, {"rpy", vec(p.rpy)}}; }

Pose pose_from_json(const Json& j) {
  Pose p;
  p.position = vec3(field(j, "xyz"));
  p.rpy = vec3(field(j, "rpy"));
  return p;
}

Json to_json(const Path& path) {
  Json wps = Json::array();
  for (std::size_t t = 0; t < path.size(); ++t) {
    Json w = {{"pose", to_json(path.waypoints[t])}};
    if (path.has_joints()) w["q"] = vec(path.joints[t].q);
    wps.push_back(std::move(w));
  }
  return {{"dt", path.dt}, {"waypoints", wps}};
}

Path path_from_json(const Json& j) {
  Path p;
  p.dt = get<double>(j, "dt");
  const Json& wps = field(j, "waypoints");
  if (!wps.is_array()) throw FormatError("'waypoints' must be an array");
  bool joints = !wps.empty();
  for (const auto& w : wps) joints = joints && w.contains("q");
  for (const auto& w : wps) {
    p.waypoints.push_back(pose_from_json(field(w, "pose")));
    if (joints) p.joints.push_back(joint_from_json(w["q"]));
  }
  return p;
}

Json to_json(const CorrectedPath& c, const CorrectionDelta& delta) {
  Json j = to_json(c.as_path());
  j["base_id"] = c.base_id;
  j["provenance"] = to_string(c.provenance);
  Json d = Json::array();
  for (const auto& v : delta.deltas) d.push_back(vec(v));
  j["delta"] = d;
  return j;
}

CorrectedPath corrected_path_from_json(const Json& j) {
  CorrectedPath c;
  const Path p = path_from_json(j);
  c.poses = p.waypoints;
  c.dt = p.dt;
  c.base_id = get_or<std::string>(j, "base_id", "");
  c.provenance = provenance_from_string(get_or<std::string>(j, "provenance", "human"));
  return c;
}

Json to_json(const CorrectionScenario& s) {
  return {{"kind", to_string(s.kind)},          {"amplitude", vec(s.amplitude)},
          {"center", s.center},                  {"width", s.width},
          {"amplitude_jitter", s.amplitude_jitter}, {"center_jitter", s.center_jitter}};
}

CorrectionScenario scenario_from_json(const Json& j) {
  CorrectionScenario s;
  s.kind = scenario_from_string(get<std::string>(j, "kind"));
  if (j.contains("amplitude")) {
    const auto a = vector_from_json(j["amplitude"]);
    if (a.size() == 3)
      s.amplitude.head<3>() = a;
    else if (a.size() == 6)
      s.amplitude = a;
    else
      throw ConfigError("scenario: amplitude needs 3 or 6 entries");
  }
  s.center = get_or(j, "center", s.center);
  s.width = get_or(j, "width", s.width);
  s.amplitude_jitter = get_or(j, "amplitude_jitter", s.amplitude_jitter);
  s.center_jitter = get_or(j, "center_jitter", s.center_jitter);
  return s;
}

Json to_json(const VirtualOptions& o) {
  return {{"degree", o.degree}, {"jitter", o.jitter}, {"smooth_correction", o.smooth_correction}};
}

VirtualOptions virtual_options_from_json(const Json& j, VirtualOptions o) {
  o.degree = get_or(j, "degree", o.degree);
  o.jitter = get_or(j, "jitter", o.jitter);
  o.smooth_correction = get_or(j, "smooth_correction", o.smooth_correction);
  return o;
}

Json to_json(const TrainOptions& o) {
  return {{"hidden", o.hidden},
          {"activation", to_string(o.activation)},
          {"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"learning_rate", o.learning_rate},
          {"final_rate_ratio", o.final_rate_ratio},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"weight_averaging", o.weight_averaging}};
}

TrainOptions train_options_from_json(const Json& j, TrainOptions o) {
  o.hidden = get_or(j, "hidden", o.hidden);
  if (j.contains("activation")) o.activation = activation_from_string(get<std::string>(j, "activation"));
  o.epochs = get_or(j, "epochs", o.epochs);
  o.batch_size = get_or(j, "batch_size", o.batch_size);
  o.learning_rate = get_or(j, "learning_rate", o.learning_rate);
  o.final_rate_ratio = get_or(j, "final_rate_ratio", o.final_rate_ratio);
  o.beta1 = get_or(j, "beta1", o.beta1);
  o.beta2 = get_or(j, "beta2", o.beta2);
  o.epsilon = get_or(j, "epsilon", o.epsilon);
  o.weight_averaging = get_or(j, "weight_averaging", o.weight_averaging);
  o.validate();
  return o;
}

Json to_json(const Normalization& n) {
  return {{"state_mean", vec(n.state_mean)},
          {"state_scale", vec(n.state_scale)},
          {"action_mean", vec(n.action_mean)},
          {"action_scale", vec(n.action_scale)}};
}

Normalization normalization_from_json(const Json& j) {
  Normalization n;
  n.state_mean = vec3(field(j, "state_mean"));
  n.state_scale = vec3(field(j, "state_scale"));
  n.action_mean = vec6(field(j, "action_mean"));
  n.action_scale = vec6(field(j, "action_scale"));
  return n;
}

Json to_json(const DemonstrationDataset& d) {
  Json demos = Json::array();
  for (const auto& demo : d.demos) {
    Json seq = Json::array();
    for (const auto& p : demo) seq.push_back({{"s", vec(p.state)}, {"a", vec(p.action)}});
    demos.push_back(std::move(seq));
  }
  return {{"source_ids", d.source_ids},
          {"pulley_center", vec(d.pulley_center)},
          {"normalization", to_json(d.normalization)},
          {"demos", demos}};
}

DemonstrationDataset dataset_from_json(const Json& j) {
  DemonstrationDataset d;
  d.source_ids = get_or<std::vector<std::string>>(j, "source_ids", {});
  d.pulley_center = vec3(field(j, "pulley_center"));
  d.normalization = normalization_from_json(field(j, "normalization"));
  for (const auto& seq : field(j, "demos")) {
    std::vector<StateActionPair> demo;
    for (const auto& p : seq) demo.push_back({vec3(field(p, "s")), vec6(field(p, "a"))});
    d.demos.push_back(std::move(demo));
  }
  return d;
}

Json to_json(const Policy& p) {
  Json layers = Json::array();
  for (const auto& l : p.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    layers.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"weight", w}, {"bias", vec(l.bias)}});
  }
  return {{"activation", to_string(p.activation)},
          {"layers", layers},
          {"normalization", to_json(p.normalization)}};
}

Policy policy_from_json(const Json& j) {
  Policy p;
  p.activation = activation_from_string(get<std::string>(j, "activation"));
  p.normalization = normalization_from_json(field(j, "normalization"));
  for (const auto& l : field(j, "layers")) {
    const auto in = get<Eigen::Index>(l, "in"), out = get<Eigen::Index>(l, "out");
    const auto w = vector_from_json(field(l, "weight"), in * out);
    DenseLayer layer{Eigen::MatrixXd(out, in), vector_from_json(field(l, "bias"), out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = w(r * in + c);
    p.layers.push_back(std::move(layer));
  }
  p.validate();
  return p;
}

Json to_json(const EvalMetrics& m) {
  return {{"rmse", m.rmse}, {"mean_rmse", m.mean_rmse}, {"max_deviation", m.max_deviation}};
}

}  // namespace beltforge::io
