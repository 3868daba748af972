#include "beltforge/hinge_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "beltforge/errors.hpp"

namespace beltforge {

double SparseAffine::eval(const Eigen::VectorXd& x) const {
  double v = constant;
  for (const auto& [i, a] : coefficients) v += a * x(i);
  return v;
}

HingeQp::HingeQp(Eigen::SparseMatrix<double> hessian, Eigen::VectorXd linear)
    : hessian_(std::move(hessian)), linear_(std::move(linear)) {
  const auto n = linear_.size();
  if (hessian_.rows() != n || hessian_.cols() != n) throw DomainError("hinge qp: H shape mismatch");
  lower_ = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  upper_ = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
}

void HingeQp::add_hinge(SparseAffine term, double weight) {
  if (!(weight >= 0.0)) throw DomainError("hinge qp: negative hinge weight");
  for (const auto& [i, a] : term.coefficients)
    if (i < 0 || i >= linear_.size()) throw DomainError("hinge qp: coefficient index out of range");
  hinges_.push_back(std::move(term));
  weights_.push_back(weight);
}

void HingeQp::set_bounds(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() != linear_.size() || upper.size() != linear_.size())
    throw DomainError("hinge qp: bound size mismatch");
  if (((upper - lower).array() < 0.0).any()) throw DomainError("hinge qp: empty box");
  lower_ = std::move(lower);
  upper_ = std::move(upper);
}

double HingeQp::objective(const Eigen::VectorXd& x) const {
  double v = 0.5 * x.dot(hessian_ * x) + linear_.dot(x);
  for (std::size_t i = 0; i < hinges_.size(); ++i)
    v += weights_[i] * std::max(0.0, hinges_[i].eval(x));
  return v;
}

namespace {

// Largest step in [0, 1] keeping v + alpha * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  return alpha;
}

}  // namespace

HingeQpResult HingeQp::solve(const HingeQpOptions& options, const Eigen::VectorXd* start) const {
  using Eigen::VectorXd;
  const Eigen::Index n = linear_.size();
  if (n == 0) return {VectorXd(), 0, true};

  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 0; j < n; ++j) fixed[static_cast<std::size_t>(j)] = upper_(j) - lower_(j) <= 0.0;

  VectorXd x = VectorXd::Zero(n);
  if (start != nullptr) {
    if (start->size() != n) throw DomainError("hinge qp: start size mismatch");
    x = *start;
  }
  std::vector<Eigen::Index> up_idx;
  std::vector<Eigen::Index> lo_idx;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lo = lower_(j);
    const double hi = upper_(j);
    if (fixed[static_cast<std::size_t>(j)]) {
      x(j) = lo;
      continue;
    }
    if (start == nullptr && std::isfinite(lo) && std::isfinite(hi)) x(j) = 0.5 * (lo + hi);
    if (std::isfinite(lo) && std::isfinite(hi)) {
      const double pad = 0.1 * (hi - lo);
      x(j) = std::clamp(x(j), lo + pad, hi - pad);
    } else if (std::isfinite(lo)) {
      x(j) = std::max(x(j), lo + 1.0);
    } else if (std::isfinite(hi)) {
      x(j) = std::min(x(j), hi - 1.0);
    }
    if (std::isfinite(hi)) up_idx.push_back(j);
    if (std::isfinite(lo)) lo_idx.push_back(j);
  }

  // Hinge rows restricted to free variables; fixed ones fold into b.
  std::vector<Eigen::Triplet<double>> a_trip;
  std::vector<double> b_vals;
  std::vector<double> w_vals;
  for (std::size_t i = 0; i < hinges_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    const auto row = static_cast<int>(b_vals.size());
    double b = hinges_[i].constant;
    for (const auto& [j, a] : hinges_[i].coefficients) {
      if (fixed[static_cast<std::size_t>(j)])
        b += a * x(j);
      else
        a_trip.emplace_back(row, j, a);
    }
    b_vals.push_back(b);
    w_vals.push_back(weights_[i]);
  }
  const auto m = static_cast<Eigen::Index>(b_vals.size());
  Eigen::SparseMatrix<double> a_mat(m, n);
  a_mat.setFromTriplets(a_trip.begin(), a_trip.end());
  const Eigen::SparseMatrix<double> a_t = a_mat.transpose();
  const VectorXd b = Eigen::Map<const VectorXd>(b_vals.data(), m);
  const VectorXd w = Eigen::Map<const VectorXd>(w_vals.data(), m);

  const auto n_up = static_cast<Eigen::Index>(up_idx.size());
  const auto n_lo = static_cast<Eigen::Index>(lo_idx.size());

  // Linear term with the fixed variables folded in; H restricted to free ones.
  VectorXd c = linear_;
  std::vector<Eigen::Triplet<double>> h_trip;
  for (int k = 0; k < hessian_.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(hessian_, k); it; ++it) {
      const auto r = it.row();
      const auto col = it.col();
      const bool fr = fixed[static_cast<std::size_t>(r)];
      const bool fc = fixed[static_cast<std::size_t>(col)];
      if (fr || fc) {
        if (!fr && fc) c(r) += it.value() * x(col);
        continue;
      }
      h_trip.emplace_back(r, col, it.value());
    }
  }
  Eigen::SparseMatrix<double> h_free(n, n);
  h_free.setFromTriplets(h_trip.begin(), h_trip.end());
  for (Eigen::Index j = 0; j < n; ++j)
    if (fixed[static_cast<std::size_t>(j)]) c(j) = 0.0;

  // Slacks and multipliers.
  VectorXd t = (a_mat * x + b).cwiseMax(0.0).array() + 1.0;
  VectorXd s1 = t - (a_mat * x + b);
  VectorXd s2 = t;
  VectorXd z1 = 0.5 * w;
  VectorXd z2 = 0.5 * w;
  VectorXd s3(n_up), z3 = VectorXd::Ones(n_up);
  VectorXd s4(n_lo), z4 = VectorXd::Ones(n_lo);
  for (Eigen::Index k = 0; k < n_up; ++k) s3(k) = upper_(up_idx[static_cast<std::size_t>(k)]) - x(up_idx[static_cast<std::size_t>(k)]);
  for (Eigen::Index k = 0; k < n_lo; ++k) s4(k) = x(lo_idx[static_cast<std::size_t>(k)]) - lower_(lo_idx[static_cast<std::size_t>(k)]);

  const Eigen::Index pairs = 2 * m + n_up + n_lo;
  const double scale = 1.0 + std::max({c.cwiseAbs().maxCoeff(), m > 0 ? w.maxCoeff() : 0.0, 1.0});

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  bool analyzed = false;

  HingeQpResult result;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    VectorXd r_x = h_free * x + c + a_t * z1;
    for (Eigen::Index k = 0; k < n_up; ++k) r_x(up_idx[static_cast<std::size_t>(k)]) += z3(k);
    for (Eigen::Index k = 0; k < n_lo; ++k) r_x(lo_idx[static_cast<std::size_t>(k)]) -= z4(k);
    for (Eigen::Index j = 0; j < n; ++j)
      if (fixed[static_cast<std::size_t>(j)]) r_x(j) = 0.0;
    const VectorXd r_t = w - z1 - z2;
    const VectorXd r1 = a_mat * x + b - t + s1;
    const VectorXd r2 = s2 - t;
    VectorXd r3(n_up), r4(n_lo);
    for (Eigen::Index k = 0; k < n_up; ++k) {
      const auto j = up_idx[static_cast<std::size_t>(k)];
      r3(k) = x(j) - upper_(j) + s3(k);
    }
    for (Eigen::Index k = 0; k < n_lo; ++k) {
      const auto j = lo_idx[static_cast<std::size_t>(k)];
      r4(k) = lower_(j) - x(j) + s4(k);
    }

    const double gap = s1.dot(z1) + s2.dot(z2) + s3.dot(z3) + s4.dot(z4);
    double primal = 0.0;
    for (const VectorXd* r : {&r1, &r2, static_cast<const VectorXd*>(&r3), static_cast<const VectorXd*>(&r4)})
      if (r->size() > 0) primal = std::max(primal, r->cwiseAbs().maxCoeff());
    const double dual = std::max(r_x.size() > 0 ? r_x.cwiseAbs().maxCoeff() : 0.0,
                                 m > 0 ? r_t.cwiseAbs().maxCoeff() : 0.0);
    result.iterations = iter;
    if (pairs > 0 && gap <= options.tolerance * scale && primal <= options.tolerance * scale &&
        dual <= options.tolerance * scale) {
      result.converged = true;
      break;
    }
    const double mu = pairs > 0 ? gap / static_cast<double>(pairs) : 0.0;

    const VectorXd d1 = z1.cwiseQuotient(s1);
    const VectorXd d2 = z2.cwiseQuotient(s2);
    const VectorXd d3 = z3.cwiseQuotient(s3);
    const VectorXd d4 = z4.cwiseQuotient(s4);
    const VectorXd e = d1.cwiseProduct(d2).cwiseQuotient(d1 + d2);

    Eigen::SparseMatrix<double> normal = a_t * e.asDiagonal() * a_mat;
    normal += h_free;
    VectorXd diag = VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n_up; ++k) diag(up_idx[static_cast<std::size_t>(k)]) += d3(k);
    for (Eigen::Index k = 0; k < n_lo; ++k) diag(lo_idx[static_cast<std::size_t>(k)]) += d4(k);
    for (Eigen::Index j = 0; j < n; ++j)
      if (fixed[static_cast<std::size_t>(j)]) diag(j) = 1.0;
    Eigen::SparseMatrix<double> diag_mat(n, n);
    {
      std::vector<Eigen::Triplet<double>> dt;
      for (Eigen::Index j = 0; j < n; ++j) dt.emplace_back(j, j, diag(j));
      diag_mat.setFromTriplets(dt.begin(), dt.end());
    }
    normal += diag_mat;
    if (!analyzed) {
      llt.analyzePattern(normal);
      analyzed = true;
    }
    llt.factorize(normal);
    if (llt.info() != Eigen::Success) break;

    struct Direction {
      VectorXd x, t, s1, s2, s3, s4, z1, z2, z3, z4;
    };
    auto direction = [&](const VectorXd& rc1, const VectorXd& rc2, const VectorXd& rc3,
                         const VectorXd& rc4) {
      const VectorXd g1 = -rc1.cwiseQuotient(s1) + d1.cwiseProduct(r1);
      const VectorXd g2 = -rc2.cwiseQuotient(s2) + d2.cwiseProduct(r2);
      const VectorXd g3 = -rc3.cwiseQuotient(s3) + d3.cwiseProduct(r3);
      const VectorXd g4 = -rc4.cwiseQuotient(s4) + d4.cwiseProduct(r4);
      const VectorXd h1 =
          (d2.cwiseProduct(g1) - d1.cwiseProduct(g2) + d1.cwiseProduct(r_t)).cwiseQuotient(d1 + d2);
      VectorXd rhs = -r_x - a_t * h1;
      for (Eigen::Index k = 0; k < n_up; ++k) rhs(up_idx[static_cast<std::size_t>(k)]) -= g3(k);
      for (Eigen::Index k = 0; k < n_lo; ++k) rhs(lo_idx[static_cast<std::size_t>(k)]) += g4(k);
      for (Eigen::Index j = 0; j < n; ++j)
        if (fixed[static_cast<std::size_t>(j)]) rhs(j) = 0.0;
      Direction d;
      d.x = llt.solve(rhs);
      const VectorXd adx = a_mat * d.x;
      d.t = (g1 + g2 - r_t + d1.cwiseProduct(adx)).cwiseQuotient(d1 + d2);
      d.z1 = h1 + e.cwiseProduct(adx);
      d.z2 = r_t - d.z1;
      d.s1 = -r1 - adx + d.t;
      d.s2 = -r2 + d.t;
      d.s3.resize(n_up);
      d.z3.resize(n_up);
      for (Eigen::Index k = 0; k < n_up; ++k) {
        const double dx = d.x(up_idx[static_cast<std::size_t>(k)]);
        d.s3(k) = -r3(k) - dx;
        d.z3(k) = g3(k) + d3(k) * dx;
      }
      d.s4.resize(n_lo);
      d.z4.resize(n_lo);
      for (Eigen::Index k = 0; k < n_lo; ++k) {
        const double dx = d.x(lo_idx[static_cast<std::size_t>(k)]);
        d.s4(k) = -r4(k) + dx;
        d.z4(k) = g4(k) - d4(k) * dx;
      }
      return d;
    };
    auto step_length = [&](const Direction& d) {
      return std::min({max_step(s1, d.s1), max_step(s2, d.s2), max_step(s3, d.s3),
                       max_step(s4, d.s4), max_step(z1, d.z1), max_step(z2, d.z2),
                       max_step(z3, d.z3), max_step(z4, d.z4)});
    };

    const Direction aff = direction(s1.cwiseProduct(z1), s2.cwiseProduct(z2), s3.cwiseProduct(z3),
                                    s4.cwiseProduct(z4));
    const double a_aff = step_length(aff);
    auto shifted = [&](const VectorXd& s, const VectorXd& ds, const VectorXd& z,
                       const VectorXd& dz) {
      return (s + a_aff * ds).dot(z + a_aff * dz);
    };
    const double gap_aff = shifted(s1, aff.s1, z1, aff.z1) + shifted(s2, aff.s2, z2, aff.z2) +
                           shifted(s3, aff.s3, z3, aff.z3) + shifted(s4, aff.s4, z4, aff.z4);
    const double sigma = pairs > 0 ? std::pow(std::clamp(gap_aff / gap, 0.0, 1.0), 3) : 0.0;
    const double target = sigma * mu;
    auto corr = [&](const VectorXd& s, const VectorXd& z, const VectorXd& ds,
                    const VectorXd& dz) {
      return VectorXd((s.cwiseProduct(z) + ds.cwiseProduct(dz)).array() - target);
    };
    const Direction d = direction(corr(s1, z1, aff.s1, aff.z1), corr(s2, z2, aff.s2, aff.z2),
                                  corr(s3, z3, aff.s3, aff.z3), corr(s4, z4, aff.s4, aff.z4));
    const double alpha = std::min(1.0, 0.99 * step_length(d));

    x += alpha * d.x;
    t += alpha * d.t;
    s1 += alpha * d.s1;
    s2 += alpha * d.s2;
    s3 += alpha * d.s3;
    s4 += alpha * d.s4;
    z1 += alpha * d.z1;
    z2 += alpha * d.z2;
    z3 += alpha * d.z3;
    z4 += alpha * d.z4;
    result.iterations = iter + 1;
    if (pairs == 0) {  // unconstrained: the Newton step is exact
      result.converged = true;
      break;
    }
  }
  result.x = x.cwiseMax(lower_).cwiseMin(upper_);
  return result;
}

}  // namespace beltforge
