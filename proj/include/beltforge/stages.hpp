#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "beltforge/config.hpp"
#include "beltforge/store.hpp"

namespace beltforge {

struct StageContext {
  const PipelineConfig& config;
  ArtifactStore& store;
  std::uint64_t seed;
  std::ostream* log = nullptr;
};

struct FileRecord {
  std::string name;
  std::string sha256;
};

struct StageResult {
  std::string stage;
  std::vector<ArtifactInfo> artifacts;
  std::vector<FileRecord> files;
  double seconds = 0.0;
  io::Json summary;
};

/// Artifact kinds.
inline constexpr const char* kBeltFit = "belt-fit";
inline constexpr const char* kPlannedPath = "path";
inline constexpr const char* kCorrectedPath = "corrected-path";
inline constexpr const char* kDataset = "dataset";
inline constexpr const char* kPolicy = "policy";
inline constexpr const char* kLearnedPath = "learned-path";
inline constexpr const char* kEvalReport = "eval-report";

/// Fits the belt samples named in the config (or records the fixed params).
StageResult run_fit_belt(const StageContext& ctx);
/// Plans the configured problem; belt params from `belt_fit_id` when given,
/// else from the config (which must then not name samples).
StageResult run_plan(const StageContext& ctx, const std::optional<std::string>& belt_fit_id);
/// config.correction_count synthetic corrections of a planned path.
StageResult run_correct_synth(const StageContext& ctx, const std::string& path_id);
/// Ingests `correction_files` as human corrections, then builds the virtual
/// demonstrations and the dataset from every human or synthetic correction of
/// the path.
StageResult run_augment(const StageContext& ctx, const std::string& path_id,
                        const std::vector<std::filesystem::path>& correction_files = {});
StageResult run_train(const StageContext& ctx, const std::string& dataset_id);
StageResult run_rollout(const StageContext& ctx, const std::string& policy_id);
/// Against `reference_ids`, or every human / synthetic correction of the
/// learned path's base when empty. Also writes eval-<id>.csv.
StageResult run_eval(const StageContext& ctx, const std::string& learned_id,
                     const std::vector<std::string>& reference_ids = {});

/// All stages in order with synthetic corrections.
std::vector<StageResult> run_pipeline(const StageContext& ctx);

/// manifest.json (stage ids and hashes plus the config snapshot) and
/// manifest.timings.json next to it. With `append` the stages are added to an
/// existing manifest.
void write_manifest(const StageContext& ctx, const std::vector<StageResult>& stages, bool append);

/// Rejected correction with a machine-readable reason: length_mismatch,
/// endpoint_moved, non_finite, angle_out_of_range, base_mismatch,
/// schema_mismatch, invalid_body, not_a_path.
class CorrectionRejected : public Error {
 public:
  CorrectionRejected(std::string reason, const std::string& what)
      : Error(ErrorCode::kFormat, what), reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

/// Validates a CorrectedPath body against the planned path `path_id` and
/// stores it with provenance human. Used by the service and by `augment`.
ArtifactInfo ingest_correction(ArtifactStore& store, const std::string& path_id, const io::Json& body);

/// The planned path stored under `path_id` (pose waypoints).
Path load_path(const ArtifactStore& store, const std::string& id);

}  // namespace beltforge
