#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vperturb/gauss/covariance.hpp"
#include "vperturb/schedule/schedule.hpp"
#include "vperturb/train/problem.hpp"
#include "vperturb/train/sgd.hpp"

namespace vperturb::proxies {

using gauss::Covariance;
using gauss::Vector;

// Which gradient-deviation estimator feeds V_hat, and in which geometry:
// "_ref" variants weight by the reference precision instead of Sigma_t^{-1}.
enum class DeviationMode { Dev, DevRef, Fluc, FlucRef, FlucK };

std::string to_string(DeviationMode mode);
DeviationMode deviation_mode_from_string(const std::string& name);
bool uses_reference_weight(DeviationMode mode);

struct ProxyOptions {
  // Checkpoint steps, each in 1..T-1. Empty is allowed (B_hat = R_hat).
  std::vector<std::size_t> checkpoints;
  std::size_t mc_samples = 100;
  std::size_t mc_samples_final = 1000;
  DeviationMode deviation_mode = DeviationMode::Dev;
  std::uint64_t seed = 0;
  // Train and eval output sensitivities share their perturbation draws.
  bool common_random_numbers = true;

  void validate(std::size_t horizon) const;
};

// 1, 2, ..., T-1.
std::vector<std::size_t> all_checkpoints(std::size_t horizon);

// Monte Carlo mean with its standard error (sample sd / sqrt(m)).
struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

struct CheckpointProxies {
  std::size_t t = 0;
  double eta = 0.0;
  double v_hat = 0.0;
  DeviationMode v_mode = DeviationMode::Dev;
  // Absent when no evaluation data exists.
  std::optional<double> gamma_hat;
  double gamma_se = 0.0;
  double c_hat = 0.0;
  bool certified = false;
  // Largest generalized eigenvalue of (Sigma_t, Sigma_t^ref).
  double kappa = 1.0;
  double tr_sigma_t = 0.0;
  double tr_sigma_1t = 0.0;
};

struct ProxyReport {
  std::vector<CheckpointProxies> checkpoints;
  McEstimate delta_train;
  std::optional<McEstimate> delta_eval;
  std::optional<double> r_hat;
  // Summary with coefficient 2 eta_t^2, and the sharper eta_t^2 variant.
  double b_hat = 0.0;
  double b_hat_sharp = 0.0;
  double tr_sigma_final = 0.0;

  ProxyOptions options;
  std::string schedule_kind;
  std::string reference_mode;
  std::string certificate;
  bool population_gradient_analytic = false;
  std::vector<std::string> notes;
};

// |g_t - g_hat|^2 in the inverse geometry of `weight`.
double deviation_proxy(const Vector& g_t, const Vector& g_hat, const Covariance& weight);

// Scaling that turns |g1 - g2|^2 into an estimate of the fluctuation of a
// half-batch gradient: 2 b1 b2 / (b1 + b2)^2, which is 1/2 when b1 = b2.
double subbatch_scaling(std::size_t b1, std::size_t b2);
double fluctuation_proxy(const Vector& g1, const Vector& g2, std::size_t b1, std::size_t b2,
                         const Covariance& weight);
// 1/(K-1) sum_k |g_k - mean|^2 in the inverse geometry of `weight`, K >= 2.
double fluctuation_proxy_k(std::span<const Vector> grads, const Covariance& weight);

// (1/m) sum_j |g(w + zeta_j, eval) - g(w, eval)|^2_{weight^{-1}}, zeta_j ~
// N(0, accumulated). Absent without evaluation data; exactly 0 when
// `accumulated` is the zero sentinel.
std::optional<McEstimate> sensitivity_proxy(const train::Model& model, const Vector& w,
                                            const Covariance& accumulated, const Covariance& weight,
                                            const train::SampleSet& eval, std::size_t m, gauss::RandomStream& rng);

// Zero when certified, otherwise the Gaussian covariance-comparison cost.
double covariance_mismatch_proxy(const Covariance& sigma_t, const schedule::ReferenceCovariance& reference);

// (1/m) sum_j [L(w) - L(w + zeta_j)] over `samples` with the given draws
// (rows of zeta). Signed.
McEstimate output_sensitivity_from_draws(const train::Model& model, const Vector& w, const gauss::Matrix& zeta,
                                         const train::SampleSet& samples);
McEstimate output_sensitivity_proxy(const train::Model& model, const Vector& w, const Covariance& accumulated,
                                    const train::SampleSet& samples, std::size_t m, gauss::RandomStream& rng);

double penalty_difference(double delta_eval, double delta_train);

// sum over checkpoints of coefficient * eta^2 (V + Gamma) + C, plus R_hat when present.
double assemble_summary(std::span<const CheckpointProxies> checkpoints, const std::optional<double>& r_hat,
                        double coefficient);

struct ReplayedStep {
  Covariance sigma;
  schedule::ReferenceCovariance reference;
  // Sigma_{1:t}
  Covariance accumulated;
};

struct ScheduleReplay {
  std::vector<ReplayedStep> steps;
  Covariance accumulated_final;
};

// Sequential schedule and reference replay along a trajectory. Virtual-prefix
// statistics are fed by one simulated virtual path drawn from `seed`.
ScheduleReplay replay_schedule(const train::Trajectory& traj, const schedule::ScheduleSpec& schedule_spec,
                               const schedule::ReferenceSpec& reference, std::uint64_t seed);

// Algorithm 1 on a recorded trajectory: replays the schedule sequentially,
// then evaluates checkpoints in parallel with per-step random streams.
ProxyReport run_algorithm1(const train::Problem& problem, const train::Trajectory& traj,
                           const schedule::ScheduleSpec& schedule_spec, const schedule::ReferenceSpec& reference,
                           const ProxyOptions& options);

// Dedicated scalar implementation for the constant Sigma_t = sigma^2 I
// schedule with the synchronized reference. Uses the same random streams as
// run_algorithm1, so both agree bit for bit.
ProxyReport run_fixed_isotropic(const train::Problem& problem, const train::Trajectory& traj, double sigma,
                                const ProxyOptions& options);

// Per-checkpoint table: t, V_hat, V_mode, Gamma_hat, C_hat, tr_sigma_t,
// tr_sigma_1t, eta. Each metadata pair becomes a leading "# key: value" line.
void write_csv(const ProxyReport& report, std::ostream& out,
               const std::vector<std::pair<std::string, std::string>>& metadata = {});
nlohmann::ordered_json to_json(const ProxyReport& report);
nlohmann::ordered_json to_json(const ProxyOptions& options);
nlohmann::ordered_json to_json(const schedule::ScheduleSpec& spec);

// Stream tags, combined with the step through gauss::stream_id.
inline constexpr std::uint64_t kSensitivityStream = 0x5E75ull;
inline constexpr std::uint64_t kOutputStream = 0x0D17ull;
inline constexpr std::uint64_t kOutputEvalStream = 0x0D18ull;
inline constexpr std::uint64_t kVirtualPathStream = 0x7A17ull;

}  // namespace vperturb::proxies
