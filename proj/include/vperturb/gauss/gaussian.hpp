#pragma once

#include "vperturb/gauss/covariance.hpp"

namespace vperturb::gauss {

struct GaussianMoments {
  GaussianMoments(Vector mean, Covariance cov);

  Vector mean;
  Covariance cov;
};

// x^T Sigma^{-1} x.
double mahalanobis_sq(const Vector& x, const Covariance& cov);

// Tr(reference^{-1} actual), using closed forms where both are diagonal.
double trace_of_solve(const Covariance& reference, const Covariance& actual);

/// KL(N(mu_p, Sigma_p) || N(mu_q, Sigma_q)) in nats:
/// 0.5 [ |mu_p - mu_q|^2_{Sigma_q^{-1}} + Tr(Sigma_q^{-1} Sigma_p) - d + ln det Sigma_q / det Sigma_p ].
double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q);

/// Gaussian KL cost of smoothing with `actual` when the comparison kernel uses
/// `reference`; equals gaussian_kl with equal means.
double cov_compare_cost(const Covariance& actual, const Covariance& reference);

// Upper bound sqrt(3) Tr(Sigma)^{3/2} on E|zeta|^3 for zeta ~ N(0, Sigma).
double third_moment_bound(const Covariance& cov);

// Smallest kappa with reference^{-1} <= kappa * sigma^{-1} in Loewner order,
// i.e. the largest generalized eigenvalue of (sigma, reference).
double comparability_kappa(const Covariance& sigma, const Covariance& reference);

}  // namespace vperturb::gauss
