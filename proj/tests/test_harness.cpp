#include <atomic>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"
#include "beltforge/service.hpp"
#include "beltforge/stages.hpp"

using namespace beltforge;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("beltforge-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const PipelineConfig& small_config() {
  static const PipelineConfig c = load_config(testing::data_dir() / "pipeline_small.json");
  return c;
}

// Store holding the small config's planned path; returns its id.
std::string plan_into(ArtifactStore& store) {
  const StageContext ctx{small_config(), store, small_config().seed};
  const auto fit = run_fit_belt(ctx);
  return run_plan(ctx, fit.artifacts[0].id).artifacts[0].id;
}

io::Json bump_body(const Path& base, double dz) {
  CorrectedPath c{"", base.waypoints, Provenance::kHuman, base.dt};
  for (std::size_t t = 1; t + 1 < c.size(); ++t)
    c.poses[t].position.z() += dz * std::sin(M_PI * static_cast<double>(t) / (c.size() - 1));
  io::Json j = io::to_json(c.as_path());
  j["schema"] = io::kSchema;
  return j;
}

}  // namespace

TEST_CASE("sha256 and derived seeds") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(derive_seed(7, "train") == derive_seed(7, "train"));
  CHECK(derive_seed(7, "train") != derive_seed(8, "train"));
  CHECK(derive_seed(7, "train") != derive_seed(7, "augment"));
  // big-endian prefix of sha256("7/train")
  const std::string h = sha256_hex("7/train");
  CHECK(derive_seed(7, "train") == std::stoull(h.substr(0, 16), nullptr, 16));
}

TEST_CASE("content-addressed store") {
  TempDir dir;
  ArtifactStore store(dir.path);
  const auto a = store.put("thing", {{"x", 1}});
  const auto b = store.put("thing", {{"x", 1}});
  CHECK(a.id == b.id);
  CHECK(a.id.size() == 16);
  CHECK(a.sha256.substr(0, 16) == a.id);
  CHECK(sha256_hex(slurp(a.file)) == a.sha256);
  CHECK(store.contains(a.id));
  CHECK(store.get(a.id)["kind"] == "thing");
  CHECK(store.get(a.id)["schema"] == io::kSchema);
  CHECK_THROWS_AS(store.get("0123456789abcdef"), StageDependencyError);
  CHECK_THROWS_AS(store.get(a.id, "other"), StageDependencyError);
  store.put("other", {{"y", 2}});
  CHECK(store.list().size() == 2);
  CHECK(store.list("thing").size() == 1);

  // an artifact with a foreign schema is a format error
  std::ofstream(dir.path / "feedfacefeedface.json") << "{\"schema\": \"belt-forge/0\", \"kind\": \"thing\"}\n";
  CHECK_THROWS_AS(store.get("feedfacefeedface"), FormatError);
}

TEST_CASE("config loading") {
  const auto& c = small_config();
  CHECK(c.robot.spheres.size() == 10);
  CHECK(c.belt_samples.has_value());
  CHECK(c.scenarios.size() == 2);
  CHECK(c.pulley_center == c.scene.pulley_b_center);
  CHECK_FALSE(c.snapshot.contains("output"));
  CHECK(c.snapshot["robot"].is_object());
  CHECK(c.snapshot["belt"]["samples"].contains("sha256"));

  TempDir dir;
  io::Json j = io::read_file(testing::data_dir() / "pipeline_small.json");
  const auto write = [&](const io::Json& doc) {
    io::write_file(dir.path / "c.json", io::dump(doc));
    return dir.path / "c.json";
  };
  CHECK_THROWS_AS(load_config(dir.path / "missing.json"), ConfigError);
  io::Json bad = j;
  bad["schema"] = "belt-forge/2";
  CHECK_THROWS_AS(load_config(write(bad)), FormatError);
  bad = j;
  bad["robot"] = "nowhere.json";
  CHECK_THROWS_AS(load_config(write(bad)), ConfigError);
  bad = j;
  bad["robot"] = 42;
  CHECK_THROWS_AS(load_config(write(bad)), ConfigError);
  bad = io::read_file(testing::config_dir() / "pipeline_default.json");
  bad["robot"] = io::to_json(testing::ur10e());
  bad["scene"] = io::to_json(testing::default_scene());
  bad["belt"].erase("samples");
  bad["corrections"]["scenarios"][0]["kind"] = "wiggle";
  CHECK_THROWS_AS(load_config(write(bad)), ConfigError);
  bad["corrections"]["scenarios"] = io::Json::array();
  CHECK_THROWS_AS(load_config(write(bad)), ConfigError);
  bad["corrections"]["count"] = 0;
  CHECK_NOTHROW(load_config(write(bad)));
}

TEST_CASE("stage dependencies") {
  TempDir dir;
  ArtifactStore store(dir.path);
  const StageContext ctx{small_config(), store, 1};
  CHECK_THROWS_AS(run_correct_synth(ctx, "0123456789abcdef"), StageDependencyError);
  CHECK_THROWS_AS(run_train(ctx, "0123456789abcdef"), StageDependencyError);
  CHECK_THROWS_AS(run_plan(ctx, std::nullopt), StageDependencyError);  // samples need fit-belt
  const auto fit = run_fit_belt(ctx);
  CHECK_THROWS_AS(run_train(ctx, fit.artifacts[0].id), StageDependencyError);  // wrong kind
  const auto path = run_plan(ctx, fit.artifacts[0].id);
  CHECK_THROWS_AS(run_augment(ctx, path.artifacts[0].id), StageDependencyError);  // no corrections yet
}

TEST_CASE("pipeline is deterministic under the master seed" * doctest::timeout(300)) {
  TempDir a, b, c;
  std::vector<std::string> manifests;
  for (auto* d : {&a, &b}) {
    ArtifactStore store(d->path);
    const StageContext ctx{small_config(), store, 7};
    const auto stages = run_pipeline(ctx);
    REQUIRE(stages.size() == 7);
    write_manifest(ctx, stages, false);
    manifests.push_back(slurp(d->path / "manifest.json"));
  }
  CHECK(manifests[0] == manifests[1]);
  for (const auto& e : std::filesystem::directory_iterator(a.path)) {
    if (e.path().filename() == "manifest.timings.json") continue;
    CHECK(slurp(e.path()) == slurp(b.path / e.path().filename()));
  }

  // every file in the manifest exists with the listed hash
  const io::Json m = io::parse(manifests[0]);
  for (const auto& s : m["stages"]) {
    for (const auto& art : s["artifacts"])
      CHECK(sha256_hex(slurp(a.path / (art["id"].get<std::string>() + ".json"))) == art["sha256"]);
    for (const auto& f : s["files"]) CHECK(sha256_hex(slurp(a.path / f["name"].get<std::string>())) == f["sha256"]);
  }
  CHECK(io::read_file(a.path / "manifest.timings.json")["stages"].size() == 7);

  // a different seed changes the corrections
  ArtifactStore other(c.path);
  const StageContext ctx{small_config(), other, 8};
  const auto fit = run_fit_belt(ctx);
  const auto path = run_plan(ctx, fit.artifacts[0].id);
  const auto synth = run_correct_synth(ctx, path.artifacts[0].id);
  const auto first = io::parse(manifests[0])["stages"][2]["artifacts"][0]["id"];
  CHECK(synth.artifacts[0].id != first.get<std::string>());
}

TEST_CASE("every stored artifact re-serialises identically" * doctest::timeout(300)) {
  TempDir dir;
  ArtifactStore store(dir.path);
  const StageContext ctx{small_config(), store, 3};
  run_pipeline(ctx);
  for (const auto& info : store.list()) {
    const std::string text = slurp(info.file);
    CHECK(io::dump(io::parse(text)) == text);
    const io::Json j = io::parse(text);
    const std::string kind = j["kind"];
    io::Json typed;
    if (kind == kPlannedPath || kind == kLearnedPath) typed = io::to_json(io::path_from_json(j));
    if (kind == kPolicy) typed = io::to_json(io::policy_from_json(j));
    if (kind == kDataset) typed = io::to_json(io::dataset_from_json(j));
    if (typed.is_null()) continue;
    for (auto it = typed.begin(); it != typed.end(); ++it) CHECK(io::dump(it.value()) == io::dump(j[it.key()]));
  }
}

TEST_CASE("correction ingestion rules") {
  TempDir dir;
  ArtifactStore store(dir.path);
  const std::string id = plan_into(store);
  const Path base = load_path(store, id);
  const auto reason = [&](const io::Json& body) {
    try {
      ingest_correction(store, id, body);
    } catch (const CorrectionRejected& e) {
      return e.reason();
    }
    return std::string("accepted");
  };

  io::Json same = io::to_json(CorrectedPath{"", base.waypoints, Provenance::kHuman, base.dt}.as_path());
  const auto info = ingest_correction(store, id, same);
  const io::Json stored = store.get(info.id);
  CHECK(stored["provenance"] == "human");
  CHECK(stored["base_id"] == id);
  for (const auto& d : stored["delta"])
    for (const auto& v : d) CHECK(v.get<double>() == 0.0);

  io::Json j = same;
  j["waypoints"].erase(j["waypoints"].size() - 1);
  CHECK(reason(j) == "length_mismatch");
  j = same;
  j["waypoints"][0]["pose"]["xyz"][0] = j["waypoints"][0]["pose"]["xyz"][0].get<double>() + 0.01;
  CHECK(reason(j) == "endpoint_moved");
  j = same;
  j["waypoints"][5]["pose"]["rpy"][0] = 4.0;
  CHECK(reason(j) == "angle_out_of_range");
  j = same;
  j["base_id"] = "ffffffffffffffff";
  CHECK(reason(j) == "base_mismatch");
  j = same;
  j["schema"] = "belt-forge/0";
  CHECK(reason(j) == "schema_mismatch");
  CHECK(reason(io::Json::array()) == "invalid_body");
  CHECK(reason({{"dt", 0.1}}) == "invalid_body");
  const auto other = store.put("note", {{"x", 1}});
  CHECK_THROWS_AS(ingest_correction(store, other.id, same), CorrectionRejected);
  CHECK_THROWS_AS(ingest_correction(store, "0123456789abcdef", same), StageDependencyError);
}

TEST_CASE("service endpoints") {
  TempDir dir;
  ArtifactStore store(dir.path);
  const std::string id = plan_into(store);
  const Path base = load_path(store, id);
  CorrectionService service(store, {{"schema", io::kSchema}, {"scene", io::to_json(small_config().scene)}});
  const int port = service.start();
  httplib::Client cli("127.0.0.1", port);

  auto r = cli.Get("/api/status");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(io::parse(r->body)["status"] == "ok");

  r = cli.Get("/api/paths");
  REQUIRE(r);
  const auto list = io::parse(r->body)["paths"];
  REQUIRE(list.size() == 1);
  CHECK(list[0]["id"] == id);

  r = cli.Get(("/api/paths/" + id).c_str());
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "application/json");
  CHECK(io::path_from_json(io::parse(r->body)).size() == base.size());
  CHECK(cli.Get("/api/paths/0123456789abcdef")->status == 404);
  CHECK(cli.Get("/api/scene")->status == 200);
  CHECK(io::parse(cli.Get("/api/scene")->body)["scene"]["obstacles"].size() == 2);

  const std::string url = "/api/paths/" + id + "/corrections";
  io::Json body = bump_body(base, 0.03);
  r = cli.Post(url.c_str(), io::dump(body), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  const std::string cid = io::parse(r->body)["id"];
  CHECK(store.get(cid)["provenance"] == "human");

  body["waypoints"].erase(body["waypoints"].size() - 1);
  r = cli.Post(url.c_str(), io::dump(body), "application/json");
  CHECK(r->status == 422);
  CHECK(io::parse(r->body)["error"] == "length_mismatch");
  r = cli.Post(url.c_str(), "{oops", "application/json");
  CHECK(r->status == 422);
  CHECK(io::parse(r->body)["error"] == "invalid_body");
  CHECK(cli.Post("/api/paths/0123456789abcdef/corrections", "{}", "application/json")->status == 404);

  // concurrent submissions are serialised by the store
  std::vector<std::thread> threads;
  std::atomic<int> created{0};
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      auto res = c.Post(url.c_str(), io::dump(bump_body(base, 0.01 * (i + 1))), "application/json");
      if (res && res->status == 201) ++created;
    });
  for (auto& t : threads) t.join();
  CHECK(created == 4);
  service.stop();
}

TEST_CASE("posted and file corrections give identical datasets" * doctest::timeout(300)) {
  TempDir via_api, via_file, files;
  std::string dataset[2];
  for (int k = 0; k < 2; ++k) {
    ArtifactStore store(k == 0 ? via_api.path : via_file.path);
    const StageContext ctx{small_config(), store, 7};
    const std::string id = plan_into(store);
    run_correct_synth(ctx, id);
    const io::Json body = bump_body(load_path(store, id), 0.03);
    std::vector<std::filesystem::path> inputs;
    if (k == 0) {
      CorrectionService service(store, io::Json::object());
      const int port = service.start();
      httplib::Client cli("127.0.0.1", port);
      auto r = cli.Post(("/api/paths/" + id + "/corrections").c_str(), io::dump(body), "application/json");
      REQUIRE(r);
      REQUIRE(r->status == 201);
    } else {
      inputs.push_back(files.path / "bump.json");
      io::write_file(inputs.back(), io::dump(body));
    }
    const auto aug = run_augment(ctx, id, inputs);
    dataset[k] = slurp(aug.artifacts.back().file);
    CHECK(aug.summary["corrections"] == 4);
  }
  CHECK(dataset[0] == dataset[1]);
}

TEST_CASE("eval against itself is zero") {
  TempDir dir;
  ArtifactStore store(dir.path);
  const std::string id = plan_into(store);
  const StageContext ctx{small_config(), store, 1};
  const io::Json learned = store.get(id);
  io::Json body = io::to_json(io::path_from_json(learned));
  body["base_id"] = id;
  const auto l = store.put(kLearnedPath, body);
  const auto r = run_eval(ctx, l.id, {l.id});
  CHECK(r.summary["mean_rmse"] == 0.0);
  CHECK(r.summary["mean_path_rmse"] == 0.0);
  const std::string csv = slurp(dir.path / ("eval-" + l.id + ".csv"));
  CHECK(csv.rfind("reference_id,rmse\n", 0) == 0);
  CHECK(csv.find(l.id + ",0\n") != std::string::npos);
  CHECK(sha256_hex(csv) == r.files[0].sha256);
}
