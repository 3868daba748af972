#pragma once

#include <string>
#include <vector>

#include "beltforge/errors.hpp"

namespace beltforge {

/// Hunt-Crossley belt parameters. The constructor rejects k <= 0, beta < 1,
/// lambda < 0 and rest_length <= 0.
struct BeltParams {
  double k;
  double beta;
  double lambda;
  double rest_length;

  BeltParams(double k, double beta, double lambda, double rest_length);
};

/// Admissible belt-force band, 0 <= f_lower < f_upper. f_upper may be +inf.
struct ForceBounds {
  double f_lower;
  double f_upper;

  ForceBounds(double f_lower, double f_upper);
};

struct ForceSample {
  double displacement;
  double displacement_rate;
  double force;
};

/// F = k x^beta + lambda x^beta xdot, clamped below at zero.
/// Throws DomainError for negative displacement.
double belt_force(const BeltParams& params, double displacement, double displacement_rate);

/// Partial derivatives of the unclamped force.
struct BeltForceGradient {
  double d_displacement;
  double d_rate;
};
BeltForceGradient belt_force_gradient(const BeltParams& params, double displacement,
                                      double displacement_rate);

struct LmOptions {
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
};

struct FitReport {
  double initial_sse = 0.0;
  double final_sse = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  // SSE after the initial guess and after every accepted step.
  std::vector<double> sse_trace;
};

struct FitResult {
  BeltParams params;
  FitReport report;
};

double sum_squared_residuals(const BeltParams& params, const std::vector<ForceSample>& samples);

/// Levenberg-Marquardt fit of (k, beta, lambda). rest_length is carried over
/// from the initial guess.
FitResult fit_params(const std::vector<ForceSample>& samples, const BeltParams& initial_guess,
                     const LmOptions& options = {});

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, FitResult best)
      : Error(ErrorCode::kNonConvergence, what), best_(std::move(best)) {}
  const FitResult& best() const noexcept { return best_; }

 private:
  FitResult best_;
};

/// Reads a CSV with header `displacement,rate,force`.
std::vector<ForceSample> read_force_samples_csv(const std::string& path);
std::vector<ForceSample> parse_force_samples_csv(const std::string& text);

}  // namespace beltforge
