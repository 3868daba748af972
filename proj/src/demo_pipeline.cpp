#include "beltforge/demo_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace beltforge {

namespace {

// d with a + d == c when representable; plain c - a can be off by an ulp.
double exact_difference(double c, double a) {
  double d = c - a;
  for (int i = 0; i < 4 && a + d != c; ++i) d += c - (a + d);
  return d;
}

// Same for angles under apply_correction's wrap.
double exact_angle_difference(double c, double a) {
  double d = angle_difference(c, a);
  for (int i = 0; i < 4 && wrap_angle(a + d) != c; ++i) d += angle_difference(c, wrap_angle(a + d));
  return d;
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DomainError(std::string(what) + ": length mismatch");
}

// T_0..T_degree at x in [-1, 1].
Eigen::VectorXd chebyshev_row(double x, int degree) {
  Eigen::VectorXd row(degree + 1);
  row(0) = 1.0;
  if (degree >= 1) row(1) = x;
  for (int k = 2; k <= degree; ++k) row(k) = 2.0 * x * row(k - 1) - row(k - 2);
  return row;
}

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kHuman:
      return "human";
    case Provenance::kSynthetic:
      return "synthetic";
    case Provenance::kVirtual:
      return "virtual";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "human") return Provenance::kHuman;
  if (s == "synthetic") return Provenance::kSynthetic;
  if (s == "virtual") return Provenance::kVirtual;
  throw FormatError("unknown provenance '" + s + "'");
}

Path CorrectedPath::as_path() const { return Path{poses, {}, dt}; }

CorrectionDelta extract_correction(const Path& offline, const CorrectedPath& corrected) {
  check_lengths(offline.size(), corrected.size(), "extract_correction");
  CorrectionDelta out;
  out.deltas.resize(offline.size());
  for (std::size_t t = 0; t < offline.size(); ++t) {
    const Pose& a = offline.waypoints[t];
    const Pose& c = corrected.poses[t];
    Vector6d d;
    for (int i = 0; i < 3; ++i) {
      d(i) = exact_difference(c.position(i), a.position(i));
      d(3 + i) = exact_angle_difference(c.rpy(i), a.rpy(i));
    }
    out.deltas[t] = d;
  }
  return out;
}

CorrectedPath apply_correction(const Path& offline, const CorrectionDelta& delta,
                               std::string base_id, Provenance provenance) {
  check_lengths(offline.size(), delta.size(), "apply_correction");
  CorrectedPath out;
  out.base_id = std::move(base_id);
  out.provenance = provenance;
  out.dt = offline.dt;
  out.poses.resize(offline.size());
  for (std::size_t t = 0; t < offline.size(); ++t) {
    const Vector6d& d = delta.deltas[t];
    if (!d.allFinite()) throw DomainError("apply_correction: non-finite delta");
    Pose p;
    p.position = offline.waypoints[t].position + d.head<3>();
    for (int i = 0; i < 3; ++i) p.rpy(i) = wrap_angle(offline.waypoints[t].rpy(i) + d(3 + i));
    out.poses[t] = p;
  }
  return out;
}

Vector6d PolyFit::evaluate(double s) const {
  const Eigen::VectorXd row = chebyshev_row(2.0 * s - 1.0, degree);
  Vector6d v;
  for (int dim = 0; dim < 6; ++dim) v(dim) = row.dot(coefficients[static_cast<std::size_t>(dim)]);
  return v;
}

PolyFit fit_polynomial(const Path& path, int degree) {
  const auto n = static_cast<int>(path.size());
  if (degree < 0) throw DomainError("fit_polynomial: negative degree");
  if (n < 2) throw DomainError("fit_polynomial: need at least two waypoints");
  if (degree + 1 > n) throw DomainError("fit_polynomial: degree too high for the waypoint count");

  const double T = n - 1;
  Eigen::MatrixXd A(n, degree + 1);
  Eigen::MatrixXd Y(n, 6);
  for (int t = 0; t < n; ++t) {
    A.row(t) = chebyshev_row(2.0 * (t / T) - 1.0, degree).transpose();
    const Pose& p = path.waypoints[static_cast<std::size_t>(t)];
    Y.block<1, 3>(t, 0) = p.position.transpose();
    for (int i = 0; i < 3; ++i) {
      Y(t, 3 + i) = t == 0 ? p.rpy(i)
                           : Y(t - 1, 3 + i) +
                                 angle_difference(p.rpy(i),
                                                  path.waypoints[static_cast<std::size_t>(t - 1)].rpy(i));
    }
  }
  const Eigen::MatrixXd coeffs = A.colPivHouseholderQr().solve(Y);
  PolyFit fit;
  fit.degree = degree;
  for (int dim = 0; dim < 6; ++dim) fit.coefficients[static_cast<std::size_t>(dim)] = coeffs.col(dim);
  return fit;
}

Path sample(const PolyFit& fit, int segments, double dt) {
  if (segments < 1) throw DomainError("sample: need at least one segment");
  Path out;
  out.dt = dt;
  out.waypoints.resize(static_cast<std::size_t>(segments) + 1);
  for (int t = 0; t <= segments; ++t) {
    const Vector6d v = fit.evaluate(static_cast<double>(t) / segments);
    if (!v.allFinite()) throw DomainError("sample: non-finite polynomial value");
    Pose p;
    p.position = v.head<3>();
    for (int i = 0; i < 3; ++i) p.rpy(i) = wrap_angle(v(3 + i));
    out.waypoints[static_cast<std::size_t>(t)] = p;
  }
  return out;
}

CorrectedPath make_virtual(const Path& offline, const CorrectionDelta& correction,
                           const VirtualOptions& options, std::uint64_t seed,
                           std::string base_id) {
  check_lengths(offline.size(), correction.size(), "make_virtual");
  if (options.jitter < 0.0) throw DomainError("make_virtual: negative jitter");
  PolyFit fit = fit_polynomial(offline, options.degree);
  if (options.jitter > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, options.jitter);
    for (auto& c : fit.coefficients)
      for (Eigen::Index k = 0; k < c.size(); ++k) c(k) += noise(rng);
  }
  const Path approx = sample(fit, static_cast<int>(offline.size()) - 1, offline.dt);

  CorrectionDelta delta = correction;
  if (options.smooth_correction && delta.size() > 2) {
    for (std::size_t t = 1; t + 1 < delta.size(); ++t)
      delta.deltas[t] =
          0.25 * correction.deltas[t - 1] + 0.5 * correction.deltas[t] + 0.25 * correction.deltas[t + 1];
  }
  return apply_correction(approx, delta, std::move(base_id), Provenance::kVirtual);
}

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::kBump:
      return "bump";
    case ScenarioKind::kDrift:
      return "drift";
    case ScenarioKind::kWaypointDrag:
      return "waypoint-drag";
  }
  return "unknown";
}

ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "bump") return ScenarioKind::kBump;
  if (s == "drift") return ScenarioKind::kDrift;
  if (s == "waypoint-drag") return ScenarioKind::kWaypointDrag;
  throw ConfigError("unknown correction scenario '" + s + "'");
}

CorrectionDelta scenario_delta(std::size_t waypoints, const CorrectionScenario& sc,
                               std::uint64_t seed) {
  if (waypoints < 2) throw DomainError("scenario: need at least two waypoints");
  if (!sc.amplitude.allFinite()) throw ConfigError("scenario: non-finite amplitude");
  const double T = static_cast<double>(waypoints - 1);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double scale = 1.0 + sc.amplitude_jitter * unit(rng);
  const double center = std::clamp((sc.center + sc.center_jitter * unit(rng)) * T, 0.0, T);
  const Vector6d amp = scale * sc.amplitude;

  std::vector<double> w(waypoints, 0.0);
  switch (sc.kind) {
    case ScenarioKind::kBump: {
      const double sigma = sc.width * T;
      if (!(sigma > 0.0)) throw ConfigError("bump: width must be > 0");
      auto g = [&](double t) { return std::exp(-0.5 * (t - center) * (t - center) / (sigma * sigma)); };
      const double g0 = g(0.0), gT = g(T);
      auto h = [&](double t) { return g(t) - (g0 * (1.0 - t / T) + gT * (t / T)); };
      const double peak = h(center);
      if (peak > 0.0)
        for (std::size_t t = 0; t < waypoints; ++t) w[t] = h(static_cast<double>(t)) / peak;
      break;
    }
    case ScenarioKind::kDrift:
      for (std::size_t t = 0; t < waypoints; ++t) w[t] = static_cast<double>(t) / T;
      break;
    case ScenarioKind::kWaypointDrag: {
      if (waypoints < 3) break;
      const double anchor = std::clamp(std::round(center), 1.0, T - 1.0);
      double left = anchor, right = T - anchor;
      if (sc.width > 0.0) {
        left = std::min(left, sc.width * T);
        right = std::min(right, sc.width * T);
      }
      for (std::size_t i = 0; i < waypoints; ++i) {
        const double t = static_cast<double>(i);
        if (t <= anchor)
          w[i] = smoothstep((t - (anchor - left)) / left);
        else
          w[i] = smoothstep(((anchor + right) - t) / right);
      }
      break;
    }
  }
  CorrectionDelta out;
  out.deltas.reserve(waypoints);
  for (double wt : w) out.deltas.push_back(wt * amp);
  return out;
}

CorrectedPath synthesize_correction(const Path& offline, const CorrectionScenario& scenario,
                                    std::uint64_t seed, std::string base_id) {
  return apply_correction(offline, scenario_delta(offline.size(), scenario, seed),
                          std::move(base_id), Provenance::kSynthetic);
}

}  // namespace beltforge
