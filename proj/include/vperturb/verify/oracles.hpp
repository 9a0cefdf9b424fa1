#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vperturb/gauss/covariance.hpp"
#include "vperturb/schedule/schedule.hpp"
#include "vperturb/train/sgd.hpp"

namespace vperturb::verify {

using gauss::Covariance;
using gauss::Matrix;
using gauss::Vector;

// Uniform grid with trapezoidal weights.
struct Grid1D {
  double lower = -10.0;
  double upper = 10.0;
  std::size_t points = 4001;

  double step() const { return (upper - lower) / static_cast<double>(points - 1); }
  double node(std::size_t i) const { return lower + step() * static_cast<double>(i); }
  double weight(std::size_t i) const { return (i == 0 || i + 1 == points) ? 0.5 * step() : step(); }
  void validate() const;
};

struct Grid2D {
  Grid1D x{-10.0, 10.0, 801};
  Grid1D y{-10.0, 10.0, 801};
};

// Log densities.
using LogDensity1D = std::function<double(double)>;
using LogDensity2D = std::function<double(double, double)>;

double normal_logpdf(double x, double mean, double var);
// log sum_i w_i N(x; mean_i, var)
double mixture_logpdf(double x, const std::vector<double>& means, const std::vector<double>& weights, double var);
double normal_logpdf_2d(double x, double y, const Vector& mean, const Matrix& cov);

// Grid that covers `sds` standard deviations around every listed mean.
Grid1D covering_grid(const std::vector<double>& means, double max_var, std::size_t points = 4001, double sds = 10.0);
Grid2D covering_grid_2d(const std::vector<Vector>& means, const std::vector<Matrix>& covs, std::size_t points = 801,
                        double sds = 10.0);

// Trapezoidal integral of exp(log_density).
double integrate_density(const LogDensity1D& logp, const Grid1D& grid);
double integrate_density(const LogDensity2D& logp, const Grid2D& grid);

// Trapezoidal KL(p || q) = int p ln(p / q), evaluated in log space. DomainError
// when ln q is -inf at a node where p exceeds 1e-300.
double kl_numeric(const LogDensity1D& logp, const LogDensity1D& logq, const Grid1D& grid);
double kl_numeric_2d(const LogDensity2D& logp, const LogDensity2D& logq, const Grid2D& grid);

struct InequalityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack() const { return rhs - lhs; }
};

// One atom of a coupling of (X, Y): P(X = x, Y = y) = prob.
struct CoupledAtom {
  double x;
  double y;
  double prob;
};

// lhs = KL(Law(X + sigma eps) || Law(Y + sigma eps)) by grid,
// rhs = E (X - Y)^2 / (2 sigma^2) under the coupling.
InequalityCheck mixture_smoothing_check(const std::vector<CoupledAtom>& coupling, double sigma_sq,
                                        std::size_t points = 4001);

// lhs = KL(sum_i p_i N(x_i, sigma_sq) || N(m, sigma_ref_sq)) by grid,
// rhs = E (X - m)^2 / (2 sigma_ref_sq) + cov_compare_cost(sigma_sq, sigma_ref_sq).
InequalityCheck mismatch_inequality_check(const std::vector<double>& atoms, const std::vector<double>& probs, double m,
                                     double sigma_sq, double sigma_ref_sq, std::size_t points = 4001);

// Two-point training sample s in {-1, +1}, W_1 = 0 and the smoothed chain
// W_{t+1} = W_t - eta_t (a W_t + s) + eps_t, eps_t ~ N(0, sigma_t^2).
// The reference kernel uses the population drift a w (E s = 0).
struct ToyChainSpec {
  std::vector<double> eta{1.0};
  std::vector<double> sigma{1.0};
  double a = 0.0;

  void validate() const;
};

struct ToyChainResult {
  double exact_mi = 0.0;
  // sum_t E KL(actual kernel || reference kernel) = sum_t eta_t^2 / (2 sigma_t^2).
  double chain_bound = 0.0;
};

ToyChainResult toy_chain_mi(const ToyChainSpec& spec, std::size_t points = 4001);

struct AccumulatedCovCheck {
  Matrix empirical;
  Matrix target;
  // Standard error of each empirical entry.
  Matrix se;
  std::size_t replications = 0;
};

// Holds the real history fixed, draws `replications` virtual noise sequences
// eps_1..eps_{t-1} with the replayed per-step covariances, and compares the
// empirical covariance of xi_t = sum_k eps_k with Sigma_{1:t}.
AccumulatedCovCheck accumulated_cov_check(const train::Trajectory& traj, const schedule::ScheduleSpec& spec,
                                          std::size_t t, std::size_t replications, std::uint64_t seed);

// E|zeta|^3 = 2 sqrt(2/pi) sigma^3 for zeta ~ N(0, sigma^2).
double third_moment_oracle_1d(double sigma);
// Monte Carlo mean and standard error of |zeta|^3, zeta ~ N(0, cov).
std::pair<double, double> third_moment_mc(const Covariance& cov, std::size_t draws, std::uint64_t seed);

// -Tr(A Sigma)/2, the exact output sensitivity of a quadratic loss.
double quadratic_delta_oracle(const Matrix& a, const Matrix& sigma);

struct SentinelResult {
  bool passed = true;
  std::vector<std::string> failures;
};

// For each t, corrupts G_t, J_t, the subbatch gradients and every later
// record (NaN gradients and iterates, scrambled batches), replays the
// schedule and requires Sigma_t to be bitwise unchanged and finite.
SentinelResult predictability_sentinel(const train::Trajectory& traj, const schedule::ScheduleSpec& spec);

// Finite-space check that coarsening cannot increase relative entropy:
// lhs = KL(P o f^{-1} || Q o f^{-1}), rhs = KL(P || Q).
InequalityCheck conditioning_compression_check(const std::vector<double>& p, const std::vector<double>& q,
                                               const std::vector<std::size_t>& coarse_map);

}  // namespace vperturb::verify
