#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vperturb/gauss/covariance.hpp"
#include "vperturb/train/model.hpp"

namespace vperturb::bound {

using gauss::Covariance;
using gauss::Vector;

enum class BoundVariant { General, Synchronized, Comparable };
enum class PenaltyControl { Raw, Smoothness, Curvature };

std::string to_string(BoundVariant v);
std::string to_string(PenaltyControl p);
BoundVariant bound_variant_from_string(const std::string& name);

struct StepTerms {
  double eta = 0.0;
  double ev = 0.0;
  double egamma = 0.0;
  double c = 0.0;
};

struct BoundInputs {
  double r = 1.0;
  std::size_t n = 1;
  std::vector<StepTerms> steps;
  double r_delta = 0.0;
  // How r_delta was obtained.
  PenaltyControl penalty_control = PenaltyControl::Raw;
  std::optional<double> kappa;

  // Throws InputError on negative or non-finite entries, or n == 0.
  void validate() const;
};

struct BoundReport {
  // Inside the root, before the 2R^2/n factor: deviation/sensitivity part and
  // covariance-cost part.
  double info_term = 0.0;
  double cov_term_sum = 0.0;
  double sqrt_term = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  BoundVariant variant = BoundVariant::General;
  PenaltyControl penalty_control = PenaltyControl::Raw;
};

// sqrt((2R^2/n) sum_t [2 eta_t^2 (EV_t + EGamma_t) + C_t]) + R_delta.
BoundReport general_bound(const BoundInputs& in);
// sqrt((4R^2/n) sum_t eta_t^2 (EV_t + EGamma_t)) + R_delta. Every C_t must be
// zero (AdmissibilityError otherwise); the value equals general_bound exactly.
BoundReport synchronized_bound(const BoundInputs& in);
// sqrt((2R^2/n) [2 kappa sum_t eta_t^2 (EV_t + EGamma_t) + sum_t C_t]) + R_delta
// with EV, EGamma in the synchronized geometry; kappa >= 1.
BoundReport comparable_bound(const BoundInputs& in);
BoundReport assemble(BoundVariant variant, const BoundInputs& in);

// mu * E Tr(Sigma_{1:T}).
double smoothness_penalty(double mu, double expected_trace_final);

using HessianApply = std::function<Vector(const Vector&)>;

struct CurvatureExpansion {
  double leading = 0.0;
  double remainder_bound = 0.0;
};

// Tr(H Sigma) from one Hessian-vector product per coordinate.
double trace_hessian_cov(const HessianApply& hvp, const Covariance& sigma);

// leading = -Tr(H Sigma)/2, remainder_bound = (sqrt(3) rho / 6) Tr(Sigma)^{3/2}.
CurvatureExpansion curvature_expansion(const HessianApply& hvp, const Covariance& sigma, double rho);

// |Tr((H_eval - H_train) Sigma)|/2 + (sqrt(3)/6)(rho_train + rho_eval) Tr(Sigma)^{3/2}.
double curvature_mismatch_penalty(const HessianApply& h_train, const HessianApply& h_eval, const Covariance& sigma,
                                  double rho_train, double rho_eval);

// Dense Hessian of the mean loss over `data`, one HVP per column.
gauss::Matrix dense_hessian(const train::Model& model, const Vector& w, const train::SampleSet& data);

// Heuristic Hessian-Lipschitz constant: maximum over `pairs` random point
// pairs in the ball of the given radius around `center` of
// |H(w1) - H(w2)|_op / |w1 - w2|. An estimate, not a certificate.
double estimate_hessian_lipschitz(const train::Model& model, const train::SampleSet& data, const Vector& center,
                                  double radius, std::size_t pairs, std::uint64_t seed);

// Sub-Gaussian constant of a loss bounded in an interval of this width.
double subgaussian_from_range(double range);

// Largest value of 0.5 (w - z)^T A (w - z) over centers z in the box
// [lower, upper]^d (attained at a vertex); the loss is bounded below by 0.
double quadratic_loss_range(const gauss::Matrix& a, const Vector& w, double lower, double upper);

nlohmann::ordered_json to_json(const BoundReport& report);

}  // namespace vperturb::bound
