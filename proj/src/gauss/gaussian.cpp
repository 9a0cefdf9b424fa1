#include "vperturb/gauss/gaussian.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "vperturb/errors.hpp"

namespace vperturb::gauss {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw InputError(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

bool is_diagonal_kind(const Covariance& c) {
  return c.kind() == Covariance::Kind::Isotropic || c.kind() == Covariance::Kind::Diagonal;
}

}  // namespace

GaussianMoments::GaussianMoments(Vector m, Covariance c) : mean(std::move(m)), cov(std::move(c)) {
  require_same_dim(static_cast<std::size_t>(mean.size()), cov.dim(), "GaussianMoments");
}

double mahalanobis_sq(const Vector& x, const Covariance& cov) {
  require_same_dim(static_cast<std::size_t>(x.size()), cov.dim(), "mahalanobis_sq");
  if (cov.is_zero()) throw DomainError("mahalanobis_sq: zero covariance");
  if (const auto* iso = cov.get_if<Covariance::Isotropic>()) {
    return x.squaredNorm() / iso->sigma_sq;
  }
  if (const auto* diag = cov.get_if<Covariance::Diagonal>()) {
    return (x.array().square() / diag->entries.array()).sum();
  }
  return x.dot(cov.solve(x));
}

double trace_of_solve(const Covariance& reference, const Covariance& actual) {
  require_same_dim(reference.dim(), actual.dim(), "trace_of_solve");
  if (reference.is_zero()) throw DomainError("trace_of_solve: zero reference covariance");
  if (const auto* iso = reference.get_if<Covariance::Isotropic>()) {
    return actual.trace() / iso->sigma_sq;
  }
  if (const auto* diag = reference.get_if<Covariance::Diagonal>()) {
    return (actual.diagonal_entries().array() / diag->entries.array()).sum();
  }
  if (is_diagonal_kind(actual)) {
    return (reference.solve(Matrix(actual.diagonal_entries().asDiagonal())).diagonal()).sum();
  }
  return reference.solve(actual.materialize()).trace();
}

double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q) {
  require_same_dim(p.cov.dim(), q.cov.dim(), "gaussian_kl");
  if (q.cov.is_zero() || p.cov.is_zero()) throw DomainError("gaussian_kl: degenerate covariance");
  const double d = static_cast<double>(p.cov.dim());
  const double quad = mahalanobis_sq(p.mean - q.mean, q.cov);
  const double tr = trace_of_solve(q.cov, p.cov);
  const double value = 0.5 * (quad + tr - d + q.cov.logdet() - p.cov.logdet());
  return value < 0.0 ? 0.0 : value;
}

double cov_compare_cost(const Covariance& actual, const Covariance& reference) {
  require_same_dim(actual.dim(), reference.dim(), "cov_compare_cost");
  if (actual.is_zero() || reference.is_zero()) {
    throw DomainError("cov_compare_cost: degenerate covariance");
  }
  const double d = static_cast<double>(actual.dim());
  if (is_diagonal_kind(actual) && is_diagonal_kind(reference)) {
    // Coordinate-wise sum of (r - 1 - ln r), r = actual_j / reference_j.
    const Vector ratio = actual.diagonal_entries().cwiseQuotient(reference.diagonal_entries());
    const double value = 0.5 * (ratio.array() - 1.0 - ratio.array().log()).sum();
    return value < 0.0 ? 0.0 : value;
  }
  const double value =
      0.5 * (trace_of_solve(reference, actual) - d + reference.logdet() - actual.logdet());
  return value < 0.0 ? 0.0 : value;
}

double third_moment_bound(const Covariance& cov) {
  const double tr = cov.trace();
  return std::sqrt(3.0) * tr * std::sqrt(tr);
}

double comparability_kappa(const Covariance& sigma, const Covariance& reference) {
  require_same_dim(sigma.dim(), reference.dim(), "comparability_kappa");
  if (sigma.is_zero() || reference.is_zero()) {
    throw DomainError("comparability_kappa: degenerate covariance");
  }
  if (is_diagonal_kind(sigma) && is_diagonal_kind(reference)) {
    return sigma.diagonal_entries().cwiseQuotient(reference.diagonal_entries()).maxCoeff();
  }
  // sigma x = lambda reference x  <=>  eigenvalues of reference^{-1} sigma
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(sigma.materialize(), reference.materialize(),
                                                      Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw DomainError("comparability_kappa: eigensolver failed");
  return es.eigenvalues().maxCoeff();
}

}  // namespace vperturb::gauss
