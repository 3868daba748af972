#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "beltforge/planner.hpp"

namespace beltforge {

/// Per-waypoint (dx, dy, dz, droll, dpitch, dyaw).
struct CorrectionDelta {
  std::vector<Vector6d> deltas;

  std::size_t size() const { return deltas.size(); }
};

enum class Provenance { kHuman, kSynthetic, kVirtual };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct CorrectedPath {
  std::string base_id;
  std::vector<Pose> poses;
  Provenance provenance = Provenance::kSynthetic;
  double dt = 0.1;

  std::size_t size() const { return poses.size(); }
  Path as_path() const;
};

/// corrected - offline per waypoint; angles differenced on the circle. Each
/// entry is nudged by round-off so that apply_correction reproduces
/// `corrected` bitwise.
CorrectionDelta extract_correction(const Path& offline, const CorrectedPath& corrected);

/// offline + delta, angles re-wrapped to (-pi, pi].
CorrectedPath apply_correction(const Path& offline, const CorrectionDelta& delta,
                               std::string base_id, Provenance provenance);

/// Least-squares Chebyshev fit of each pose dimension over s = t / T, mapped
/// to [-1, 1]. Angles are unwrapped along the path before fitting.
struct PolyFit {
  int degree = 7;
  // coefficients[dim](k) multiplies T_k(2s - 1); dims are x y z roll pitch yaw.
  std::array<Eigen::VectorXd, 6> coefficients;

  Vector6d evaluate(double s) const;
};

PolyFit fit_polynomial(const Path& path, int degree);
/// segments + 1 pose-only waypoints at s = t / segments.
Path sample(const PolyFit& fit, int segments, double dt);

struct VirtualOptions {
  int degree = 7;
  // Standard deviation of the Gaussian noise added to every coefficient.
  double jitter = 0.0;
  // Applies a [1 2 1] / 4 filter to the interior of the correction first.
  bool smooth_correction = false;
};

/// sample(perturbed fit of offline) + correction.
CorrectedPath make_virtual(const Path& offline, const CorrectionDelta& correction,
                           const VirtualOptions& options, std::uint64_t seed,
                           std::string base_id = {});

enum class ScenarioKind { kBump, kDrift, kWaypointDrag };

std::string to_string(ScenarioKind k);
/// Throws ConfigError for unknown names.
ScenarioKind scenario_from_string(const std::string& s);

/// Scripted stand-in for a kinesthetic correction.
///  bump:  amplitude * g(t), g a Gaussian in t (sigma = width * T, centred at
///         center * T) with its chord between the endpoints removed and
///         rescaled so g(center) = 1.
///  drift: amplitude * t / T.
///  waypoint-drag: amplitude * smoothstep blend that is 1 at the anchor
///         (center * T, rounded) and falls to 0 over `width * T` waypoints on
///         each side (to the endpoints when width <= 0).
/// The seed drives the optional randomisation of amplitude and center.
struct CorrectionScenario {
  ScenarioKind kind = ScenarioKind::kBump;
  Vector6d amplitude = Vector6d::Zero();
  double center = 0.5;
  double width = 0.1;
  // Relative standard deviation of the amplitude scale.
  double amplitude_jitter = 0.0;
  // Standard deviation of the center, as a fraction of T.
  double center_jitter = 0.0;
};

CorrectionDelta scenario_delta(std::size_t waypoints, const CorrectionScenario& scenario,
                               std::uint64_t seed);

CorrectedPath synthesize_correction(const Path& offline, const CorrectionScenario& scenario,
                                    std::uint64_t seed, std::string base_id = {});

}  // namespace beltforge
