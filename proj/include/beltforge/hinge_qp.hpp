#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <utility>
#include <vector>

namespace beltforge {

/// Affine term a^T x + b with a sparse coefficient vector.
struct SparseAffine {
  std::vector<std::pair<int, double>> coefficients;
  double constant = 0.0;

  double eval(const Eigen::VectorXd& x) const;
};

struct HingeQpOptions {
  int max_iterations = 100;
  // Relative residual and complementarity target.
  double tolerance = 1e-10;
};

struct HingeQpResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
};

/// Solves
///   min 0.5 x'Hx + c'x + sum_i w_i * max(0, a_i'x + b_i)   s.t. lo <= x <= hi
/// with a primal-dual interior point method (Mehrotra predictor-corrector).
/// Each hinge gets an epigraph variable t_i >= max(0, a_i'x + b_i) that is
/// eliminated in closed form, so every Newton step is one sparse Cholesky
/// solve of H + A'EA + D. Variables with lo == hi are held fixed. H must be
/// positive definite on the free variables.
class HingeQp {
 public:
  HingeQp(Eigen::SparseMatrix<double> hessian, Eigen::VectorXd linear);

  void add_hinge(SparseAffine term, double weight);
  void set_bounds(Eigen::VectorXd lower, Eigen::VectorXd upper);

  /// `start` seeds the iteration (projected into the box); defaults to the
  /// middle of the box, or zero where the box is unbounded.
  HingeQpResult solve(const HingeQpOptions& options = {},
                      const Eigen::VectorXd* start = nullptr) const;

  /// Primal objective including hinge terms (bounds not checked).
  double objective(const Eigen::VectorXd& x) const;

 private:
  Eigen::SparseMatrix<double> hessian_;
  Eigen::VectorXd linear_;
  std::vector<SparseAffine> hinges_;
  std::vector<double> weights_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

}  // namespace beltforge
