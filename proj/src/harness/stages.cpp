#include "beltforge/stages.hpp"

#include <chrono>
#include <cstdio>

namespace beltforge {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void log(const StageContext& ctx, const std::string& line) {
  if (ctx.log) *ctx.log << line << '\n';
}

bool is_demonstration(const io::Json& j) {
  const auto p = j.value("provenance", "");
  return p == "human" || p == "synthetic";
}

// Human and synthetic corrections of `path_id`, sorted by id.
std::vector<std::pair<std::string, CorrectedPath>> corrections_of(const ArtifactStore& store,
                                                                  const std::string& path_id) {
  std::vector<std::pair<std::string, CorrectedPath>> out;
  for (const auto& info : store.list(kCorrectedPath)) {
    const io::Json j = store.get(info.id);
    if (j.value("base_id", "") != path_id || !is_demonstration(j)) continue;
    out.emplace_back(info.id, io::corrected_path_from_json(j));
  }
  return out;
}

bool same_angle(double a, double b) { return std::abs(angle_difference(a, b)) <= 1e-9; }

bool same_pose(const Pose& a, const Pose& b) {
  if ((a.position - b.position).cwiseAbs().maxCoeff() > 1e-9) return false;
  for (int i = 0; i < 3; ++i)
    if (!same_angle(a.rpy(i), b.rpy(i))) return false;
  return true;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Path load_path(const ArtifactStore& store, const std::string& id) {
  const io::Json j = store.get(id);
  const auto kind = j.value("kind", "");
  if (kind != kPlannedPath && kind != kLearnedPath && kind != kCorrectedPath)
    throw StageDependencyError("artifact '" + id + "' is not a path");
  return io::path_from_json(j);
}

StageResult run_fit_belt(const StageContext& ctx) {
  const auto t0 = Clock::now();
  StageResult r{"fit-belt", {}, {}, 0.0, {}};
  io::Json body;
  if (ctx.config.belt_samples) {
    const auto samples = read_force_samples_csv(ctx.config.belt_samples->string());
    const FitResult fit = fit_params(samples, ctx.config.belt, ctx.config.lm);
    body = {{"params", io::to_json(fit.params)},
            {"report", io::to_json(fit.report)},
            {"samples", samples.size()},
            {"fitted", true}};
    log(ctx, "fit-belt: k=" + format_double(fit.params.k) + " beta=" + format_double(fit.params.beta) +
                 " lambda=" + format_double(fit.params.lambda));
  } else {
    body = {{"params", io::to_json(ctx.config.belt)}, {"fitted", false}};
  }
  r.artifacts.push_back(ctx.store.put(kBeltFit, body));
  r.summary = {{"id", r.artifacts.back().id}, {"params", body["params"]}};
  r.seconds = seconds_since(t0);
  return r;
}

StageResult run_plan(const StageContext& ctx, const std::optional<std::string>& belt_fit_id) {
  const auto t0 = Clock::now();
  StageResult r{"plan", {}, {}, 0.0, {}};
  BeltParams belt = ctx.config.belt;
  if (belt_fit_id) {
    belt = io::belt_from_json(ctx.store.get(*belt_fit_id, kBeltFit).at("params"));
  } else if (ctx.config.belt_samples) {
    throw StageDependencyError("plan: the config fits the belt from samples; run fit-belt and pass --id");
  }
  const PlanProblem problem = ctx.config.problem(belt);
  const PlanResult result = plan(problem, ctx.config.solver);
  io::Json body = io::to_json(result.path);
  body["report"] = io::to_json(result.report);
  body["belt"] = io::to_json(belt);
  body["bounds"] = io::to_json(problem.bounds);
  body["belt_fit_id"] = belt_fit_id ? io::Json(*belt_fit_id) : io::Json(nullptr);
  r.artifacts.push_back(ctx.store.put(kPlannedPath, body));
  r.summary = {{"id", r.artifacts.back().id},
               {"converged", result.report.converged},
               {"max_violation", result.report.max_violation},
               {"iterations", result.report.iterations},
               {"matches_linear_seed", result.report.matches_linear_seed}};
  log(ctx, "plan: " + r.artifacts.back().id + " iterations=" + std::to_string(result.report.iterations));
  r.seconds = seconds_since(t0);
  return r;
}

StageResult run_correct_synth(const StageContext& ctx, const std::string& path_id) {
  const auto t0 = Clock::now();
  StageResult r{"correct-synth", {}, {}, 0.0, {}};
  ctx.store.get(path_id, kPlannedPath);
  const Path offline = load_path(ctx.store, path_id);
  const auto& scenarios = ctx.config.scenarios;
  io::Json ids = io::Json::array();
  for (int i = 0; i < ctx.config.correction_count; ++i) {
    const auto& sc = scenarios[static_cast<std::size_t>(i) % scenarios.size()];
    const auto seed = derive_seed(ctx.seed, "correct-synth/" + std::to_string(i));
    const CorrectedPath c = synthesize_correction(offline, sc, seed, path_id);
    io::Json body = io::to_json(c, extract_correction(offline, c));
    body["scenario"] = io::to_json(sc);
    body["seed"] = seed;
    r.artifacts.push_back(ctx.store.put(kCorrectedPath, body));
    ids.push_back(r.artifacts.back().id);
  }
  r.summary = {{"ids", ids}};
  r.seconds = seconds_since(t0);
  return r;
}

ArtifactInfo ingest_correction(ArtifactStore& store, const std::string& path_id, const io::Json& body) {
  const io::Json base_json = store.get(path_id);
  if (base_json.value("kind", "") != kPlannedPath)
    throw CorrectionRejected("not_a_path", "artifact '" + path_id + "' is not a planned path");
  const Path base = io::path_from_json(base_json);

  if (!body.is_object()) throw CorrectionRejected("invalid_body", "body must be a JSON object");
  if (body.contains("schema") && body["schema"] != io::kSchema)
    throw CorrectionRejected("schema_mismatch", "expected schema " + std::string(io::kSchema));
  CorrectedPath c;
  try {
    c = io::corrected_path_from_json(body);
  } catch (const Error& e) {
    throw CorrectionRejected("invalid_body", e.what());
  }
  if (!c.base_id.empty() && c.base_id != path_id)
    throw CorrectionRejected("base_mismatch", "base_id '" + c.base_id + "' does not match '" + path_id + "'");
  if (c.size() != base.size())
    throw CorrectionRejected("length_mismatch", "correction has " + std::to_string(c.size()) +
                                                    " waypoints, path has " + std::to_string(base.size()));
  for (const auto& p : c.poses) {
    if (!p.position.allFinite() || !p.rpy.allFinite())
      throw CorrectionRejected("non_finite", "non-finite pose entry");
    try {
      validate_pose(p);
    } catch (const DomainError& e) {
      throw CorrectionRejected("angle_out_of_range", e.what());
    }
  }
  if (!same_pose(c.poses.front(), base.waypoints.front()) || !same_pose(c.poses.back(), base.waypoints.back()))
    throw CorrectionRejected("endpoint_moved", "start and goal waypoints are fixed");

  c.base_id = path_id;
  c.provenance = Provenance::kHuman;
  c.dt = base.dt;
  return store.put(kCorrectedPath, io::to_json(c, extract_correction(base, c)));
}

StageResult run_augment(const StageContext& ctx, const std::string& path_id,
                        const std::vector<std::filesystem::path>& correction_files) {
  const auto t0 = Clock::now();
  StageResult r{"augment", {}, {}, 0.0, {}};
  ctx.store.get(path_id, kPlannedPath);
  for (const auto& f : correction_files) r.artifacts.push_back(ingest_correction(ctx.store, path_id, io::read_file(f)));

  const auto corrections = corrections_of(ctx.store, path_id);
  if (corrections.empty())
    throw StageDependencyError("augment: no corrections of path '" + path_id + "'; run correct-synth first");
  const Path offline = load_path(ctx.store, path_id);

  std::vector<CorrectedPath> demos;
  std::vector<std::string> ids;
  for (const auto& [id, c] : corrections) {
    demos.push_back(c);
    ids.push_back(id);
  }
  for (const auto& [id, c] : corrections) {
    const CorrectionDelta delta = extract_correction(offline, c);
    for (int k = 0; k < ctx.config.virtual_per_correction; ++k) {
      const auto seed = derive_seed(ctx.seed, "augment/" + id + "/" + std::to_string(k));
      const CorrectedPath v = make_virtual(offline, delta, ctx.config.augmentation, seed, path_id);
      io::Json body = io::to_json(v, extract_correction(offline, v));
      body["source_id"] = id;
      body["seed"] = seed;
      r.artifacts.push_back(ctx.store.put(kCorrectedPath, body));
      demos.push_back(v);
      ids.push_back(r.artifacts.back().id);
    }
  }
  const DemonstrationDataset ds = build_dataset(demos, ctx.config.pulley_center, ids);
  io::Json body = io::to_json(ds);
  body["base_id"] = path_id;
  body["segments"] = offline.size() - 1;
  r.artifacts.push_back(ctx.store.put(kDataset, body));
  r.summary = {{"dataset_id", r.artifacts.back().id},
               {"corrections", corrections.size()},
               {"demonstrations", demos.size()},
               {"pairs", ds.pair_count()}};
  log(ctx, "augment: " + std::to_string(demos.size()) + " demonstrations");
  r.seconds = seconds_since(t0);
  return r;
}

StageResult run_train(const StageContext& ctx, const std::string& dataset_id) {
  const auto t0 = Clock::now();
  StageResult r{"train", {}, {}, 0.0, {}};
  const io::Json dj = ctx.store.get(dataset_id, kDataset);
  const DemonstrationDataset ds = io::dataset_from_json(dj);
  const auto seed = derive_seed(ctx.seed, "train");
  const TrainResult tr = train(ds, ctx.config.bc, seed);
  io::Json body = io::to_json(tr.policy);
  body["dataset_id"] = dataset_id;
  body["base_id"] = dj.at("base_id");
  body["training"] = {{"seed", seed},
                      {"options", io::to_json(ctx.config.bc)},
                      {"final_loss", tr.loss_trace.back()},
                      {"loss_trace", tr.loss_trace},
                      {"smoothed_monotone", smoothed_non_increasing(tr.loss_trace)}};
  r.artifacts.push_back(ctx.store.put(kPolicy, body));
  r.summary = {{"id", r.artifacts.back().id},
               {"final_loss", tr.loss_trace.back()},
               {"smoothed_monotone", smoothed_non_increasing(tr.loss_trace)}};
  log(ctx, "train: final loss " + format_double(tr.loss_trace.back()));
  r.seconds = seconds_since(t0);
  return r;
}

StageResult run_rollout(const StageContext& ctx, const std::string& policy_id) {
  const auto t0 = Clock::now();
  StageResult r{"rollout", {}, {}, 0.0, {}};
  const io::Json pj = ctx.store.get(policy_id, kPolicy);
  const Policy policy = io::policy_from_json(pj);
  const io::Json dj = ctx.store.get(pj.at("dataset_id").get<std::string>(), kDataset);
  const std::string base_id = dj.at("base_id").get<std::string>();
  const Path offline = load_path(ctx.store, base_id);
  const Eigen::Vector3d center = io::vector_from_json(dj.at("pulley_center"), 3);
  const Path learned = rollout_path(policy, offline.waypoints.front(), center,
                                    static_cast<int>(offline.size()) - 1, offline.dt);
  io::Json body = io::to_json(learned);
  body["policy_id"] = policy_id;
  body["base_id"] = base_id;
  r.artifacts.push_back(ctx.store.put(kLearnedPath, body));
  r.summary = {{"id", r.artifacts.back().id}, {"waypoints", learned.size()}};
  r.seconds = seconds_since(t0);
  return r;
}

StageResult run_eval(const StageContext& ctx, const std::string& learned_id,
                     const std::vector<std::string>& reference_ids) {
  const auto t0 = Clock::now();
  StageResult r{"eval", {}, {}, 0.0, {}};
  const io::Json lj = ctx.store.get(learned_id);
  const Path learned = load_path(ctx.store, learned_id);

  std::vector<std::string> ids;
  std::vector<CorrectedPath> refs;
  if (reference_ids.empty()) {
    const std::string base_id = lj.value("base_id", "");
    for (auto& [id, c] : corrections_of(ctx.store, base_id)) {
      ids.push_back(id);
      refs.push_back(std::move(c));
    }
    if (refs.empty()) throw StageDependencyError("eval: no reference corrections for '" + base_id + "'");
  } else {
    for (const auto& id : reference_ids) {
      const Path p = load_path(ctx.store, id);
      ids.push_back(id);
      refs.push_back(CorrectedPath{id, p.waypoints, Provenance::kHuman, p.dt});
    }
  }
  const EvalMetrics m = evaluate(learned, refs);
  const double mean_path_rmse = evaluate(learned, {mean_path(refs)}).mean_rmse;

  io::Json body = {{"learned_id", learned_id},
                   {"reference_ids", ids},
                   {"metrics", io::to_json(m)},
                   {"mean_path_rmse", mean_path_rmse}};
  r.artifacts.push_back(ctx.store.put(kEvalReport, body));

  std::string csv = "reference_id,rmse\n";
  for (std::size_t i = 0; i < ids.size(); ++i) csv += ids[i] + "," + format_double(m.rmse[i]) + "\n";
  csv += "mean_corrected_path," + format_double(mean_path_rmse) + "\n";
  const std::string name = "eval-" + learned_id + ".csv";
  ctx.store.write_text(name, csv);
  r.files.push_back({name, sha256_hex(csv)});

  r.summary = {{"id", r.artifacts.back().id},
               {"mean_rmse", m.mean_rmse},
               {"max_deviation", m.max_deviation},
               {"mean_path_rmse", mean_path_rmse},
               {"csv", name}};
  log(ctx, "eval: mean rmse " + format_double(m.mean_rmse) + ", vs mean path " + format_double(mean_path_rmse));
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<StageResult> run_pipeline(const StageContext& ctx) {
  std::vector<StageResult> out;
  out.push_back(run_fit_belt(ctx));
  out.push_back(run_plan(ctx, out.back().artifacts.front().id));
  const std::string path_id = out.back().artifacts.front().id;
  out.push_back(run_correct_synth(ctx, path_id));
  out.push_back(run_augment(ctx, path_id));
  const std::string dataset_id = out.back().artifacts.back().id;
  out.push_back(run_train(ctx, dataset_id));
  out.push_back(run_rollout(ctx, out.back().artifacts.front().id));
  out.push_back(run_eval(ctx, out.back().artifacts.front().id));
  return out;
}

void write_manifest(const StageContext& ctx, const std::vector<StageResult>& stages, bool append) {
  const auto root = ctx.store.root();
  io::Json manifest = {{"schema", io::kSchema}, {"kind", "manifest"}, {"stages", io::Json::array()}};
  io::Json timings = {{"schema", io::kSchema}, {"kind", "timings"}, {"stages", io::Json::array()}};
  if (append && std::filesystem::exists(root / "manifest.json")) {
    manifest = io::read_file(root / "manifest.json");
    io::check_schema(manifest);
    if (std::filesystem::exists(root / "manifest.timings.json"))
      timings = io::read_file(root / "manifest.timings.json");
  }
  manifest["seed"] = ctx.seed;
  manifest["config"] = ctx.config.snapshot;
  for (const auto& s : stages) {
    io::Json arts = io::Json::array(), files = io::Json::array();
    for (const auto& a : s.artifacts) arts.push_back({{"id", a.id}, {"kind", a.kind}, {"sha256", a.sha256}});
    for (const auto& f : s.files) files.push_back({{"name", f.name}, {"sha256", f.sha256}});
    manifest["stages"].push_back({{"stage", s.stage}, {"artifacts", arts}, {"files", files}});
    timings["stages"].push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  }
  ctx.store.write_text("manifest.json", io::dump(manifest));
  ctx.store.write_text("manifest.timings.json", io::dump(timings));
}

}  // namespace beltforge
