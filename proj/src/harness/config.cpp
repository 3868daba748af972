#include "beltforge/config.hpp"

#include <fstream>
#include <sstream>

#include "beltforge/store.hpp"

namespace beltforge {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& ref) {
  const std::filesystem::path p(ref);
  return p.is_absolute() ? p : base / p;
}

// Inline object or a file reference.
io::Json section(const io::Json& j, const char* key, const std::filesystem::path& base) {
  if (!j.contains(key)) throw ConfigError(std::string("config: missing '") + key + "'");
  const auto& v = j[key];
  if (v.is_string()) {
    const auto p = resolve(base, v.get<std::string>());
    if (!std::filesystem::exists(p)) throw ConfigError("config: file not found: " + p.string());
    return io::read_file(p);
  }
  if (!v.is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object or a file name");
  return v;
}

}  // namespace

PlanProblem PipelineConfig::problem(const BeltParams& belt_params) const {
  PlanProblem p{robot, scene, belt_params, bounds, plan.q_start, plan.q_goal, plan.segments, plan.dt,
                plan.via, plan.collision_substeps};
  p.validate();
  return p;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const io::Json j = io::read_file(path);
  io::check_schema(j);
  const auto base = path.parent_path();

  PipelineConfig c;
  c.source = path;
  io::Json snap = j;
  snap.erase("output");
  try {
    c.robot = io::robot_from_json(section(j, "robot", base));
    c.scene = io::scene_from_json(section(j, "scene", base));
    snap["robot"] = io::to_json(c.robot);
    snap["scene"] = io::to_json(c.scene);

    const io::Json belt = j.value("belt", io::Json::object());
    if (belt.contains("samples")) {
      const auto p = resolve(base, belt["samples"].get<std::string>());
      if (!std::filesystem::exists(p)) throw ConfigError("config: belt sample file not found: " + p.string());
      c.belt_samples = p;
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      snap["belt"]["samples"] = {{"sha256", sha256_hex(ss.str())}};
    }
    if (!belt.contains("params")) throw ConfigError("config: belt needs 'params' (fixed or initial guess)");
    c.belt = io::belt_from_json(belt["params"]);
    if (belt.contains("lm")) {
      const auto& lm = belt["lm"];
      c.lm.initial_damping = lm.value("initial_damping", c.lm.initial_damping);
      c.lm.damping_factor = lm.value("damping_factor", c.lm.damping_factor);
      c.lm.max_iterations = lm.value("max_iterations", c.lm.max_iterations);
      c.lm.relative_tolerance = lm.value("relative_tolerance", c.lm.relative_tolerance);
    }
    if (j.contains("bounds")) c.bounds = io::bounds_from_json(j["bounds"]);

    const io::Json& plan = j.at("plan");
    c.plan.q_start = io::joint_from_json(plan.at("q_start"));
    c.plan.q_goal = io::joint_from_json(plan.at("q_goal"));
    c.plan.segments = plan.value("segments", c.plan.segments);
    c.plan.dt = plan.value("dt", c.plan.dt);
    c.plan.collision_substeps = plan.value("collision_substeps", c.plan.collision_substeps);
    if (plan.contains("via")) {
      const auto& v = plan["via"];
      c.plan.via = ViaPoint{v.at("index").get<int>(), io::vector_from_json(v.at("position"), 3),
                            v.value("tolerance", 0.01)};
    }
    c.solver = io::solver_options_from_json(j.value("solver", io::Json()));

    const io::Json corr = j.value("corrections", io::Json::object());
    c.correction_count = corr.value("count", c.correction_count);
    if (corr.contains("scenarios"))
      for (const auto& s : corr["scenarios"]) c.scenarios.push_back(io::scenario_from_json(s));
    if (c.correction_count < 0) throw ConfigError("config: correction count must be >= 0");
    if (c.correction_count > 0 && c.scenarios.empty())
      throw ConfigError("config: corrections need at least one scenario");

    const io::Json aug = j.value("augmentation", io::Json::object());
    c.virtual_per_correction = aug.value("per_correction", c.virtual_per_correction);
    if (c.virtual_per_correction < 0) throw ConfigError("config: per_correction must be >= 0");
    c.augmentation = io::virtual_options_from_json(aug);

    c.bc = io::train_options_from_json(j.value("bc", io::Json::object()));
    c.pulley_center = j.contains("pulley_center") ? Eigen::Vector3d(io::vector_from_json(j["pulley_center"], 3))
                                                  : c.scene.pulley_b_center;
    c.seed = j.value("seed", std::uint64_t{0});
    c.output = j.value("output", std::string{});
    c.problem(c.belt);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.snapshot = std::move(snap);
  return c;
}

}  // namespace beltforge
