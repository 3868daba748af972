#pragma once

#include <filesystem>
#include <string>

#include "beltforge/bc_policy.hpp"
#include "json.hpp"

namespace beltforge::io {

using Json = nlohmann::json;

inline constexpr const char* kSchema = "belt-forge/1";

/// Canonical text: sorted keys, two-space indent, shortest round-trip doubles,
/// trailing newline.
std::string dump(const Json& j);
Json parse(const std::string& text);
Json read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

/// Throws FormatError unless j["schema"] == kSchema.
void check_schema(const Json& j);

Json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index expected = -1);

Json to_json(const RobotDescription& robot);
RobotDescription robot_from_json(const Json& j);

Json to_json(const Scene& scene);
Scene scene_from_json(const Json& j);

Json to_json(const BeltParams& p);
BeltParams belt_from_json(const Json& j);
Json to_json(const ForceBounds& b);
ForceBounds bounds_from_json(const Json& j);
Json to_json(const FitReport& r);

/// Only the keys present in `j` override `base`.
SolverOptions solver_options_from_json(const Json& j, SolverOptions base = {});
Json to_json(const SolverOptions& o);
Json to_json(const SolveReport& r);

Json to_json(const Pose& p);
Pose pose_from_json(const Json& j);

/// {"dt", "waypoints": [{"q": [6], "pose": {"xyz", "rpy"}}]}; "q" only for
/// planned paths.
Json to_json(const Path& path);
Path path_from_json(const Json& j);

/// Path schema plus "base_id", "provenance" and "delta" (one 6-array per
/// waypoint). Reading ignores "delta"; it is derived data.
Json to_json(const CorrectedPath& c, const CorrectionDelta& delta);
CorrectedPath corrected_path_from_json(const Json& j);

Json to_json(const CorrectionScenario& s);
CorrectionScenario scenario_from_json(const Json& j);

Json to_json(const VirtualOptions& o);
VirtualOptions virtual_options_from_json(const Json& j, VirtualOptions base = {});

Json to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const Json& j, TrainOptions base = {});

Json to_json(const Normalization& n);
Normalization normalization_from_json(const Json& j);

Json to_json(const DemonstrationDataset& d);
DemonstrationDataset dataset_from_json(const Json& j);

/// Layer dims, activation, row-major weights and normalisation.
Json to_json(const Policy& p);
Policy policy_from_json(const Json& j);

Json to_json(const EvalMetrics& m);

JointConfig joint_from_json(const Json& j);
Json to_json(const JointConfig& q);

}  // namespace beltforge::io
