#include <csignal>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "beltforge/service.hpp"
#include "beltforge/stages.hpp"

using namespace beltforge;

namespace {

constexpr const char* kOutEnv = "BELTFORGE_OUT";

CorrectionService* g_service = nullptr;

std::filesystem::path output_dir(const std::string& flag, const PipelineConfig& config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  if (!config.output.empty()) return config.output;
  return "beltforge-out";
}

// Latest artifact of `kind` recorded in the manifest, for stages run without --id.
std::string from_manifest(const ArtifactStore& store, const std::string& kind, const std::string& stage) {
  const auto file = store.root() / "manifest.json";
  if (std::filesystem::exists(file)) {
    const io::Json m = io::read_file(file);
    const auto& stages = m.at("stages");
    for (auto s = stages.rbegin(); s != stages.rend(); ++s) {
      const auto& arts = s->at("artifacts");
      for (auto a = arts.rbegin(); a != arts.rend(); ++a)
        if (a->at("kind") == kind) return a->at("id").get<std::string>();
    }
  }
  throw StageDependencyError(stage + ": no --id given and no " + kind + " artifact in the manifest");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"belt-forge: belt insertion path planning, correction and behaviour cloning"};
  app.require_subcommand(1);

  std::string config_file, out, id;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> corrections, refs;
  int port = 8080;
  std::string host = "127.0.0.1";

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--out", out, std::string("Output directory (default $") + kOutEnv + ", then the config)");
  };
  const auto add_id = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("--id", id, what + " (default: latest in the manifest)");
  };

  auto* fit = app.add_subcommand("fit-belt", "Fit Hunt-Crossley parameters to force samples");
  add_common(fit);
  auto* plan_cmd = app.add_subcommand("plan", "Plan the belt-insertion path");
  add_common(plan_cmd);
  plan_cmd->add_option("--id", id, "belt-fit artifact (default: params from the config)");
  auto* synth = app.add_subcommand("correct-synth", "Scripted corrections of a planned path");
  add_common(synth);
  add_id(synth, "Planned path");
  auto* augment = app.add_subcommand("augment", "Virtual demonstrations and the BC dataset");
  add_common(augment);
  add_id(augment, "Planned path");
  augment->add_option("--correction", corrections, "CorrectedPath JSON file to ingest as a human correction")
      ->check(CLI::ExistingFile);
  auto* train_cmd = app.add_subcommand("train", "Train the BC policy");
  add_common(train_cmd);
  add_id(train_cmd, "Dataset");
  auto* roll = app.add_subcommand("rollout", "Roll the policy out from the path start");
  add_common(roll);
  add_id(roll, "Policy");
  auto* eval_cmd = app.add_subcommand("eval", "Score a learned path");
  add_common(eval_cmd);
  add_id(eval_cmd, "Learned path");
  eval_cmd->add_option("--ref", refs, "Reference path artifact (default: all corrections of the base)");
  auto* pipe = app.add_subcommand("pipeline", "All stages with synthetic corrections");
  add_common(pipe);
  auto* serve = app.add_subcommand("serve", "HTTP service for the correction editor");
  add_common(serve);
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig config = load_config(config_file);
    ArtifactStore store(output_dir(out, config));
    const StageContext ctx{config, store, seed.value_or(config.seed), &std::cerr};
    const auto need = [&](const std::string& kind, const std::string& stage) {
      return id.empty() ? from_manifest(store, kind, stage) : id;
    };

    std::vector<StageResult> results;
    bool append = true;
    if (fit->parsed()) {
      results.push_back(run_fit_belt(ctx));
    } else if (plan_cmd->parsed()) {
      results.push_back(run_plan(ctx, id.empty() ? std::nullopt : std::optional<std::string>(id)));
    } else if (synth->parsed()) {
      results.push_back(run_correct_synth(ctx, need(kPlannedPath, "correct-synth")));
    } else if (augment->parsed()) {
      std::vector<std::filesystem::path> files(corrections.begin(), corrections.end());
      results.push_back(run_augment(ctx, need(kPlannedPath, "augment"), files));
    } else if (train_cmd->parsed()) {
      results.push_back(run_train(ctx, need(kDataset, "train")));
    } else if (roll->parsed()) {
      results.push_back(run_rollout(ctx, need(kPolicy, "rollout")));
    } else if (eval_cmd->parsed()) {
      results.push_back(run_eval(ctx, need(kLearnedPath, "eval"), refs));
    } else if (pipe->parsed()) {
      results = run_pipeline(ctx);
      append = false;
    } else if (serve->parsed()) {
      CorrectionService service(store, {{"schema", io::kSchema},
                                        {"scene", io::to_json(config.scene)},
                                        {"robot", io::to_json(config.robot)}});
      const int bound = service.bind(host, port);
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      g_service = &service;
      std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
      std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
      service.listen();
      g_service = nullptr;
      return 0;
    }

    write_manifest(ctx, results, append);
    io::Json out_json = io::Json::array();
    for (const auto& r : results) out_json.push_back({{"stage", r.stage}, {"summary", r.summary}});
    std::cout << io::dump(results.size() == 1 ? out_json[0] : out_json);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCode::kGeneric);
  }
}
