// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "beltforge/stages.hpp"

using namespace beltforge;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %-24s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void lm_recovery() {
  const auto t0 = Clock::now();
  const BeltParams truth(500, 1.3, 20, 1.0), guess(300, 1.1, 5, 1.0);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ux(0.005, 0.05), uv(-0.1, 0.1);
  std::vector<ForceSample> clean;
  double mean_force = 0;
  for (int i = 0; i < 50; ++i) {
    const double x = ux(rng), v = uv(rng);
    clean.push_back({x, v, belt_force(truth, x, v)});
    mean_force += clean.back().force / 50;
  }
  const auto rel = [&](const BeltParams& p) {
    return std::array<double, 3>{std::abs(p.k / truth.k - 1), std::abs(p.beta / truth.beta - 1),
                                 std::abs(p.lambda / truth.lambda - 1)};
  };
  const auto e0 = rel(fit_params(clean, guess).params);
  const bool clean_ok = std::max({e0[0], e0[1], e0[2]}) <= 1e-3;

  std::array<double, 3> worst{0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 nrng(seed);
    std::normal_distribution<double> noise(0, 0.01 * mean_force);
    auto noisy = clean;
    for (auto& s : noisy) s.force += noise(nrng);
    const auto e = rel(fit_params(noisy, guess).params);
    for (int k = 0; k < 3; ++k) worst[k] = std::max(worst[k], e[k]);
  }
  const bool noisy_ok = std::max({worst[0], worst[1], worst[2]}) <= 0.05;
  const double t = since(t0);
  report("lm-recovery", clean_ok && noisy_ok && t < 1.0,
         fmt("noiseless max rel err %.1e; 1%% noise worst rel err k %.2f%% beta %.2f%% lambda %.1f%% "
             "(limit 5%%); %.3f s",
             std::max({e0[0], e0[1], e0[2]}), 100 * worst[0], 100 * worst[1], 100 * worst[2], t));
}

void unconstrained_plan() {
  PlanProblem p = testing::default_problem(ForceBounds(0, std::numeric_limits<double>::infinity()));
  p.scene.obstacles.clear();
  const auto t0 = Clock::now();
  const auto r = plan(p);
  const double t = since(t0);
  const auto seed = linear_seed(p.q_start, p.q_goal, p.segments);
  double dev = 0;
  for (std::size_t i = 0; i < seed.size(); ++i)
    dev = std::max(dev, (r.path.joints[i].q - seed[i].q).cwiseAbs().maxCoeff());
  report("unconstrained-plan", r.report.converged && dev <= 1e-6 && t < 1.0,
         fmt("max joint deviation from linear interpolation %.1e; %.3f s", dev, t));
}

void planar_oracle() {
  const PlanProblem p = testing::planar_problem();
  const SolverOptions o;
  const auto t0 = Clock::now();
  PlanResult r;
  try {
    r = plan(p, o);
  } catch (const InfeasibleError& e) {
    report("planar-oracle", false, std::string("planner infeasible: ") + e.what());
    return;
  }
  const double t = since(t0);
  const double viol = max_violation(evaluate_constraints(p, r.path));
  const double sco = joint_path_length(r.path.joints);
  const double grid = testing::grid_shortest_path(p.robot, p.scene, p.q_start, p.q_goal, 400);
  const double dense = testing::dense_clearance(p.robot, p.scene, r.path.joints);
  const double ratio = sco / grid;
  // swept clearance is informational: constraints live at waypoints and substeps
  report("planar-oracle", r.report.converged && viol <= o.ctol && std::abs(ratio - 1) <= 0.05 && t < 60.0,
         fmt("SCO length %.4f vs grid %.4f (ratio %.3f); max violation %.1e; swept clearance %.5f "
             "(margin %.2f); %.2f s",
             sco, grid, ratio, viol, dense, p.scene.safety_margin, t));
}

void force_band() {
  const PlanProblem p = testing::default_problem(ForceBounds(5, 8));
  const SolverOptions o;
  PlanResult r;
  try {
    r = plan(p, o);
  } catch (const InfeasibleError& e) {
    report("force-band", false, std::string("planner infeasible: ") + e.what());
    return;
  }
  const auto c = evaluate_constraints(p, r.path);
  // direct re-evaluation from forward kinematics
  double lo = 1e9, hi = -1e9, prev = 0;
  for (std::size_t t = 0; t < r.path.size(); ++t) {
    const Pose ee = forward_kinematics(p.robot, r.path.joints[t]);
    const double x = std::max(0.0, (ee.position - p.scene.belt_anchor).norm() - p.belt.rest_length);
    const double rate = t == 0 ? 0.0 : (x - prev) / p.dt;
    const double f = belt_force(p.belt, x, rate);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    prev = x;
  }
  const bool ok = r.report.converged && max_violation(c) <= o.ctol && lo >= 5 - o.ctol && hi <= 8 + o.ctol;
  report("force-band", ok,
         fmt("forces in [%.4f, %.4f] N for band [5, 8]; max violation %.1e", lo, hi, max_violation(c)));
}

void gradient_check() {
  double worst = 0;
  std::mt19937_64 rng(123);
  std::normal_distribution<double> g(0, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Policy policy = init_policy({64, 64}, Activation::kTanh, {}, seed);
    std::vector<StateActionPair> batch(16);
    for (auto& s : batch) {
      for (int k = 0; k < 3; ++k) s.state(k) = g(rng);
      for (int k = 0; k < 6; ++k) s.action(k) = g(rng);
    }
    worst = std::max(worst, policy_gradient_check(policy, batch));
  }
  report("gradient-check", worst < 1e-5, fmt("max relative deviation %.2e over 20 nets", worst));
}

void augmentation_identity(const Path& offline) {
  const int segments = static_cast<int>(offline.size()) - 1;
  const Path approx = sample(fit_polynomial(offline, 7), segments, offline.dt);
  const CorrectionDelta zero{std::vector<Vector6d>(offline.size(), Vector6d::Zero())};
  const auto v = make_virtual(offline, zero, {}, 1);
  bool same = true;
  for (std::size_t t = 0; t < offline.size(); ++t) same &= v.poses[t] == approx.waypoints[t];
  bool round_trip = true;
  for (const auto& c : testing::bump_corrections(offline)) {
    const auto back = apply_correction(offline, extract_correction(offline, c), c.base_id, c.provenance);
    for (std::size_t t = 0; t < c.size(); ++t) round_trip &= back.poses[t] == c.poses[t];
  }
  report("augmentation-identity", same && round_trip,
         fmt("zero-correction virtual == approximation bitwise: %s; extract/apply round trip exact: %s",
             same ? "yes" : "no", round_trip ? "yes" : "no"));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void end_to_end() {
  const auto& config = testing::default_config();
  std::string manifests[2];
  double rmse = 0, seconds = 0;
  bool monotone = false;
  std::size_t demos = 0;
  for (int run = 0; run < 2; ++run) {
    const auto dir = std::filesystem::temp_directory_path() / ("beltforge-acceptance-" + std::to_string(run));
    std::filesystem::remove_all(dir);
    ArtifactStore store(dir);
    const StageContext ctx{config, store, 7};
    const auto t0 = Clock::now();
    const auto stages = run_pipeline(ctx);
    if (run == 0) seconds = since(t0);
    write_manifest(ctx, stages, false);
    manifests[run] = slurp(dir / "manifest.json");
    if (run == 0) {
      rmse = stages.back().summary["mean_path_rmse"];
      demos = stages[3].summary["demonstrations"];
      monotone = store.get(stages[4].artifacts[0].id)["training"]["smoothed_monotone"];
    }
    std::filesystem::remove_all(dir);
  }
  const bool reproducible = manifests[0] == manifests[1];
  report("end-to-end", rmse <= 0.01 && monotone && seconds < 300 && reproducible && demos == 110,
         fmt("%zu demonstrations; rollout RMSE vs mean corrected path %.2f mm; loss smoothed-monotone: %s; "
             "%.1f s; manifest sha256 %s across runs",
             demos, 1e3 * rmse, monotone ? "yes" : "no", seconds,
             reproducible ? ("identical " + sha256_hex(manifests[0]).substr(0, 16)).c_str() : "DIFFERS"));
}

void single_demo(const Path& offline) {
  const auto demo = testing::bump_corrections(offline, 1)[0];
  const auto& center = testing::default_config().pulley_center;
  const auto ds = build_dataset({demo}, center);
  TrainOptions o;
  o.epochs = 10000;
  o.learning_rate = 1e-2;
  const auto t0 = Clock::now();
  const auto r = train(ds, o, 5);
  const Path roll = rollout_path(r.policy, demo.poses.front(), center, static_cast<int>(demo.size()) - 1);
  const double rmse = evaluate(roll, {demo}).mean_rmse;
  report("single-demo-memorization", rmse < 0.002,
         fmt("rollout RMSE %.3f mm (limit 2 mm); final loss %.1e; %.1f s", 1e3 * rmse, r.loss_trace.back(),
             since(t0)));
}

}  // namespace

int main() {
  lm_recovery();
  unconstrained_plan();
  planar_oracle();
  force_band();
  gradient_check();
  const Path offline = plan(testing::default_problem()).path;
  augmentation_identity(offline);
  end_to_end();
  single_demo(offline);
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}
