#include "beltforge/belt_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace beltforge {

BeltParams::BeltParams(double k_, double beta_, double lambda_, double rest_length_)
    : k(k_), beta(beta_), lambda(lambda_), rest_length(rest_length_) {
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("belt params: k must be > 0");
  if (!(beta >= 1.0) || !std::isfinite(beta)) throw DomainError("belt params: beta must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw DomainError("belt params: lambda must be >= 0");
  if (!(rest_length > 0.0) || !std::isfinite(rest_length))
    throw DomainError("belt params: rest_length must be > 0");
}

ForceBounds::ForceBounds(double lower, double upper) : f_lower(lower), f_upper(upper) {
  if (!(f_lower >= 0.0) || !(f_lower < f_upper))
    throw DomainError("force bounds: require 0 <= f_lower < f_upper");
}

namespace {

double raw_force(double k, double beta, double lambda, double x, double xdot) {
  if (x == 0.0) return 0.0;
  return std::pow(x, beta) * (k + lambda * xdot);
}

}  // namespace

double belt_force(const BeltParams& params, double displacement, double displacement_rate) {
  if (!(displacement >= 0.0)) throw DomainError("belt_force: negative displacement");
  return std::max(0.0, raw_force(params.k, params.beta, params.lambda, displacement,
                                 displacement_rate));
}

BeltForceGradient belt_force_gradient(const BeltParams& params, double displacement,
                                      double displacement_rate) {
  if (!(displacement >= 0.0)) throw DomainError("belt_force_gradient: negative displacement");
  if (displacement == 0.0) return {0.0, 0.0};
  const double xb = std::pow(displacement, params.beta);
  const double damped_stiffness = params.k + params.lambda * displacement_rate;
  return {params.beta * xb / displacement * damped_stiffness, params.lambda * xb};
}

double sum_squared_residuals(const BeltParams& params, const std::vector<ForceSample>& samples) {
  double sse = 0.0;
  for (const auto& s : samples) {
    const double r = belt_force(params, s.displacement, s.displacement_rate) - s.force;
    sse += r * r;
  }
  return sse;
}

namespace {

struct Theta {
  double k, beta, lambda;
};

double sse_of(const Theta& t, const std::vector<ForceSample>& samples) {
  double sse = 0.0;
  for (const auto& s : samples) {
    const double r =
        std::max(0.0, raw_force(t.k, t.beta, t.lambda, s.displacement, s.displacement_rate)) -
        s.force;
    sse += r * r;
  }
  return sse;
}

Theta clip(Theta t) {
  t.k = std::max(t.k, 1e-12);
  t.beta = std::max(t.beta, 1.0);
  t.lambda = std::max(t.lambda, 0.0);
  return t;
}

}  // namespace

FitResult fit_params(const std::vector<ForceSample>& samples, const BeltParams& initial_guess,
                     const LmOptions& options) {
  if (samples.size() < 3) throw InsufficientDataError("fit_params: need at least 3 samples");
  std::set<double> distinct;
  for (const auto& s : samples) {
    if (!(s.displacement >= 0.0)) throw DomainError("fit_params: negative displacement in sample");
    distinct.insert(s.displacement);
  }
  if (distinct.size() < 3)
    throw InsufficientDataError("fit_params: need at least 3 distinct displacements");

  const auto n = static_cast<Eigen::Index>(samples.size());
  Theta theta{initial_guess.k, initial_guess.beta, initial_guess.lambda};
  double sse = sse_of(theta, samples);

  FitReport report;
  report.initial_sse = sse;
  report.sse_trace.push_back(sse);

  auto make_result = [&](const Theta& t) {
    report.final_sse = sse;
    return FitResult{BeltParams(t.k, t.beta, t.lambda, initial_guess.rest_length), report};
  };

  if (sse == 0.0) return make_result(theta);

  double damping = options.initial_damping;
  Eigen::MatrixXd jac(n, 3);
  Eigen::VectorXd res(n);

  for (int it = 0; it < options.max_iterations; ++it) {
    report.iterations = it + 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      const double x = s.displacement;
      const double xdot = s.displacement_rate;
      const double raw = raw_force(theta.k, theta.beta, theta.lambda, x, xdot);
      res(i) = std::max(0.0, raw) - s.force;
      if (raw <= 0.0 || x == 0.0) {
        jac.row(i).setZero();
        continue;
      }
      const double xb = std::pow(x, theta.beta);
      jac(i, 0) = xb;
      jac(i, 1) = (theta.k + theta.lambda * xdot) * xb * std::log(x);
      jac(i, 2) = xb * xdot;
    }
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d grad = jac.transpose() * res;
    Eigen::Vector3d scale = jtj.diagonal();
    const double floor = std::max(scale.maxCoeff(), 1e-300) * 1e-12;
    scale = scale.cwiseMax(floor);

    bool accepted = false;
    while (damping < 1e16) {
      Eigen::Matrix3d lhs = jtj;
      lhs.diagonal() += damping * scale;
      const Eigen::Vector3d step = lhs.ldlt().solve(-grad);
      const Theta trial = clip({theta.k + step(0), theta.beta + step(1), theta.lambda + step(2)});
      const double trial_sse = sse_of(trial, samples);
      if (std::isfinite(trial_sse) && trial_sse < sse) {
        const double rel_change = (sse - trial_sse) / sse;
        theta = trial;
        sse = trial_sse;
        report.sse_trace.push_back(sse);
        ++report.accepted_steps;
        damping = std::max(damping / options.damping_factor, 1e-15);
        accepted = true;
        if (rel_change < options.relative_tolerance || sse == 0.0) return make_result(theta);
        break;
      }
      damping *= options.damping_factor;
    }
    // No damping level reduces the SSE: stationary point.
    if (!accepted) return make_result(theta);
  }
  throw NonConvergenceError("fit_params: no convergence within max iterations",
                            make_result(theta));
}

std::vector<ForceSample> parse_force_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("force samples: empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "displacement,rate,force")
    throw FormatError("force samples: expected header 'displacement,rate,force'");
  std::vector<ForceSample> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double v[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(row, cell, ','))
        throw FormatError("force samples: short row at line " + std::to_string(line_no));
      try {
        std::size_t used = 0;
        v[c] = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw FormatError("force samples: bad number at line " + std::to_string(line_no));
      }
    }
    if (v[0] < 0.0) throw DomainError("force samples: negative displacement");
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

std::vector<ForceSample> read_force_samples_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_force_samples_csv(ss.str());
}

}  // namespace beltforge
