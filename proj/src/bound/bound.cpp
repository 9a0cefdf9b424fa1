#include "vperturb/bound/bound.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

#include "vperturb/errors.hpp"
#include "vperturb/gauss/random.hpp"

namespace vperturb::bound {

using gauss::Matrix;

std::string to_string(BoundVariant v) {
  switch (v) {
    case BoundVariant::General: return "general";
    case BoundVariant::Synchronized: return "synchronized";
    case BoundVariant::Comparable: return "comparable";
  }
  return "unknown";
}

std::string to_string(PenaltyControl p) {
  switch (p) {
    case PenaltyControl::Raw: return "raw";
    case PenaltyControl::Smoothness: return "smoothness";
    case PenaltyControl::Curvature: return "curvature";
  }
  return "unknown";
}

BoundVariant bound_variant_from_string(const std::string& name) {
  for (auto v : {BoundVariant::General, BoundVariant::Synchronized, BoundVariant::Comparable}) {
    if (to_string(v) == name) return v;
  }
  throw InputError("unknown bound variant '" + name + "'");
}

namespace {

void nonnegative(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0) throw InputError(std::string(what) + " must be finite and nonnegative");
}

// sum_t eta_t^2 (EV_t + EGamma_t)
double deviation_sum(const BoundInputs& in) {
  double s = 0.0;
  for (const auto& st : in.steps) s += st.eta * st.eta * (st.ev + st.egamma);
  return s;
}

double cost_sum(const BoundInputs& in) {
  double s = 0.0;
  for (const auto& st : in.steps) s += st.c;
  return s;
}

BoundReport finish(const BoundInputs& in, double info, double cov, BoundVariant variant) {
  BoundReport rep;
  rep.info_term = info;
  rep.cov_term_sum = cov;
  const double n = static_cast<double>(in.n);
  rep.sqrt_term = std::sqrt(2.0 * in.r * in.r / n * (info + cov));
  rep.penalty = in.r_delta;
  rep.total = rep.sqrt_term + rep.penalty;
  rep.variant = variant;
  rep.penalty_control = in.penalty_control;
  return rep;
}

}  // namespace

void BoundInputs::validate() const {
  if (n == 0) throw InputError("n must be at least 1");
  nonnegative(r, "R");
  nonnegative(r_delta, "R_delta");
  for (const auto& st : steps) {
    nonnegative(st.eta, "eta_t");
    nonnegative(st.ev, "EV_t");
    nonnegative(st.egamma, "EGamma_t");
    nonnegative(st.c, "C_t");
  }
  if (kappa) nonnegative(*kappa, "kappa");
}

BoundReport general_bound(const BoundInputs& in) {
  in.validate();
  // 2 eta^2 x summed term by term; scaling by 2 is exact, so this equals
  // 2 * deviation_sum when every C_t is zero.
  double info = 0.0;
  for (const auto& st : in.steps) info += 2.0 * (st.eta * st.eta * (st.ev + st.egamma));
  return finish(in, info, cost_sum(in), BoundVariant::General);
}

BoundReport synchronized_bound(const BoundInputs& in) {
  in.validate();
  for (std::size_t k = 0; k < in.steps.size(); ++k) {
    if (in.steps[k].c != 0.0) {
      throw AdmissibilityError("synchronized bound requires zero covariance-comparison cost, but step " +
                               std::to_string(k + 1) + " has C = " + std::to_string(in.steps[k].c));
    }
  }
  BoundReport rep = general_bound(in);
  rep.variant = BoundVariant::Synchronized;
  return rep;
}

BoundReport comparable_bound(const BoundInputs& in) {
  in.validate();
  if (!in.kappa) throw InputError("comparable bound needs kappa");
  if (!(*in.kappa >= 1.0)) throw InputError("comparable bound needs kappa >= 1");
  const double info = 2.0 * *in.kappa * deviation_sum(in);
  return finish(in, info, cost_sum(in), BoundVariant::Comparable);
}

BoundReport assemble(BoundVariant variant, const BoundInputs& in) {
  switch (variant) {
    case BoundVariant::General: return general_bound(in);
    case BoundVariant::Synchronized: return synchronized_bound(in);
    case BoundVariant::Comparable: return comparable_bound(in);
  }
  throw InputError("unknown bound variant");
}

double smoothness_penalty(double mu, double expected_trace_final) {
  nonnegative(mu, "mu");
  nonnegative(expected_trace_final, "trace");
  return mu * expected_trace_final;
}

namespace {

Vector checked_hvp(const HessianApply& hvp, const Vector& v) {
  Vector h;
  try {
    h = hvp(v);
  } catch (const Error& e) {
    throw RunError(std::string("Hessian-vector product failed: ") + e.what());
  }
  if (h.size() != v.size() || !h.allFinite()) throw RunError("Hessian-vector product returned invalid values");
  return h;
}

double trace_pow_three_halves(const Covariance& sigma) {
  const double tr = sigma.trace();
  return tr * std::sqrt(tr);
}

}  // namespace

double trace_hessian_cov(const HessianApply& hvp, const Covariance& sigma) {
  if (sigma.is_zero()) return 0.0;
  const auto d = static_cast<Eigen::Index>(sigma.dim());
  double tr = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const Vector col = sigma.apply(Vector::Unit(d, i));
    tr += checked_hvp(hvp, col)[i];
  }
  return tr;
}

CurvatureExpansion curvature_expansion(const HessianApply& hvp, const Covariance& sigma, double rho) {
  nonnegative(rho, "rho");
  CurvatureExpansion out;
  if (sigma.is_zero()) return out;
  out.leading = -0.5 * trace_hessian_cov(hvp, sigma);
  out.remainder_bound = std::sqrt(3.0) * rho / 6.0 * trace_pow_three_halves(sigma);
  return out;
}

double curvature_mismatch_penalty(const HessianApply& h_train, const HessianApply& h_eval, const Covariance& sigma,
                                  double rho_train, double rho_eval) {
  nonnegative(rho_train, "rho_train");
  nonnegative(rho_eval, "rho_eval");
  if (sigma.is_zero()) return 0.0;
  const auto d = static_cast<Eigen::Index>(sigma.dim());
  double tr = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const Vector col = sigma.apply(Vector::Unit(d, i));
    tr += checked_hvp(h_eval, col)[i] - checked_hvp(h_train, col)[i];
  }
  return 0.5 * std::abs(tr) + std::sqrt(3.0) / 6.0 * (rho_train + rho_eval) * trace_pow_three_halves(sigma);
}

Matrix dense_hessian(const train::Model& model, const Vector& w, const train::SampleSet& data) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  Matrix h(d, d);
  for (Eigen::Index i = 0; i < d; ++i) h.col(i) = model.hvp(w, Vector::Unit(d, i), data);
  return 0.5 * (h + h.transpose());
}

double estimate_hessian_lipschitz(const train::Model& model, const train::SampleSet& data, const Vector& center,
                                  double radius, std::size_t pairs, std::uint64_t seed) {
  if (!(radius > 0.0)) throw InputError("radius must be positive");
  if (pairs == 0) throw InputError("need at least one pair");
  gauss::RandomStream rng(seed, gauss::stream_id({0x41B5ull}));
  const auto d = center.size();
  auto point = [&] {
    Vector u(d);
    for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal();
    const double scale = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / u.norm();
    return Vector(center + scale * u);
  };
  double best = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const Vector w1 = point();
    const Vector w2 = point();
    const double dist = (w1 - w2).norm();
    if (dist == 0.0) continue;
    const Matrix diff = dense_hessian(model, w1, data) - dense_hessian(model, w2, data);
    Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
    const double op = es.eigenvalues().cwiseAbs().maxCoeff();
    best = std::max(best, op / dist);
  }
  return best;
}

double subgaussian_from_range(double range) {
  nonnegative(range, "range");
  return range / 2.0;
}

double quadratic_loss_range(const Matrix& a, const Vector& w, double lower, double upper) {
  const auto d = w.size();
  if (a.rows() != d || a.cols() != d) throw InputError("curvature matrix dimension differs from w");
  if (!(lower <= upper)) throw InputError("box needs lower <= upper");
  if (d > 24) throw InputError("vertex enumeration limited to d <= 24");
  double best = 0.0;
  Vector z(d);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    for (Eigen::Index i = 0; i < d; ++i) z[i] = (mask >> i) & 1u ? upper : lower;
    const Vector r = w - z;
    best = std::max(best, 0.5 * r.dot(a * r));
  }
  return best;
}

nlohmann::ordered_json to_json(const BoundReport& report) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(report.variant);
  j["penalty_control"] = to_string(report.penalty_control);
  j["info_term"] = report.info_term;
  j["cov_term_sum"] = report.cov_term_sum;
  j["sqrt_term"] = report.sqrt_term;
  j["penalty"] = report.penalty;
  j["total"] = report.total;
  return j;
}

}  // namespace vperturb::bound
