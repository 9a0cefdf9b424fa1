#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vperturb/gauss/covariance.hpp"
#include "vperturb/schedule/history.hpp"

namespace vperturb::schedule {

using gauss::Covariance;

enum class ScheduleKind {
  FixedIsotropic,
  FixedDense,
  AdaptiveScalar,
  AdaptiveDiagonal,
  AdamProportional,
  AdamInverse,
  LowRankRidge,
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// What the covariance rule is allowed to look at; decides which
// synchronized references can be certified.
enum class Dependence { Deterministic, Public, PrefixObservable, DataDependent };

std::string to_string(Dependence dep);

enum class RhoSchedule { Constant, InverseSqrtT };

// Statistic names accepted by the adaptive scalar rule, besides kGradSqEma and
// kVirtualStepSqEma. "public" draws q_{t-1} = -ln U_{t-1} from a public seed.
inline constexpr const char* kPublicStat = "public";

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::FixedIsotropic;
  std::size_t dim = 0;
  // Number of iterates T; covariances exist for t = 1..T-1.
  std::size_t horizon = 0;

  // fixed_isotropic: Sigma_t = sigma^2 I
  double sigma = 0.1;
  // fixed_dense: Sigma_t = covariances[min(t, size) - 1]
  std::vector<Covariance> covariances;
  // adaptive_scalar: sigma0^2 (1 + c q_{t-1}) I
  // adaptive_diagonal: sigma0^2 (1 + c m_{t,j}), m_t = beta m_{t-1} + (1 - beta) |G_{t-1}|
  double sigma0 = 0.1;
  double c = 1.0;
  std::string stat = kGradSqEma;
  std::uint64_t public_seed = 0;
  // Adam-like: v_t = beta v_{t-1} + (1 - beta) G_{t-1}^2
  double beta = 0.9;
  double rho = 0.1;
  RhoSchedule rho_schedule = RhoSchedule::Constant;
  double eps = 1e-8;
  double lambda0 = 1e-3;
  // lowrank_ridge: lambda0 I + rho^2 sum_j u_j u_j^T over the `rank` most recent
  // nonzero past gradients, normalized.
  std::size_t rank = 2;

  void validate() const;
  Dependence dependence() const;
  double rho_at(std::size_t t) const;
};

//---------------------------------------------------------------------------//
/*!
 * Single-owner state of a predictable covariance rule.
 *
 * Each step is a strict pair: next_covariance(view) emits Sigma_t from the
 * history H_{t-1}, then advance(Sigma_t, G_t) folds in the gradient of the
 * update just taken. The gradient therefore only influences Sigma_{t+1} and
 * later. Calling advance without a pending emission is a SequencingError.
 */
class Schedule {
 public:
  explicit Schedule(ScheduleSpec spec);

  const ScheduleSpec& spec() const noexcept { return spec_; }
  // Step t whose covariance is emitted next.
  std::size_t step() const noexcept { return t_; }
  // Second-moment (Adam-like) or absolute-gradient (adaptive diagonal) EMA.
  const Vector& moment() const noexcept { return moment_; }
  // Sigma_{1:t} = sum_{k<t} Sigma_k; the zero sentinel at t = 1.
  const Covariance& accumulated() const noexcept { return accumulated_; }
  const std::vector<Covariance>& emitted() const noexcept { return emitted_; }

  Covariance next_covariance(const HistoryView& view);
  void advance(const Covariance& emitted_cov, const std::optional<Vector>& g_current);

 private:
  Covariance compute(const HistoryView& view) const;

  ScheduleSpec spec_;
  std::size_t t_ = 1;
  Vector moment_;
  Covariance accumulated_;
  std::vector<Covariance> emitted_;
  std::optional<Covariance> pending_;
};

// Replays a schedule along a trajectory and returns Sigma_1..Sigma_{T-1}.
std::vector<Covariance> replay_covariances(const ScheduleSpec& spec, const train::Trajectory& traj);

//---------------------------------------------------------------------------//
// Reference covariances
//---------------------------------------------------------------------------//

enum class ReferenceMode { SynchronizedDeterministic, SynchronizedPublic, PrefixObservable, Ghost, Explicit };

// Which admissibility argument backs a reference.
enum class Certificate { Deterministic, PublicPredictable, PrefixObservable, GhostAdaptive, None };

std::string to_string(ReferenceMode mode);
std::string to_string(Certificate cert);
ReferenceMode reference_mode_from_string(const std::string& name);

// A reference-covariance rule together with its admissibility certificate.
// Only the named constructors can build one, and they refuse synchronized
// modes whose certificate does not match the schedule's dependence class.
class ReferenceSpec {
 public:
  static ReferenceSpec synchronized_deterministic(const ScheduleSpec& spec);
  static ReferenceSpec synchronized_public(const ScheduleSpec& spec, std::uint64_t public_seed);
  static ReferenceSpec prefix_observable(const ScheduleSpec& spec);
  static ReferenceSpec ghost(std::shared_ptr<const train::Trajectory> ghost_trajectory);
  static ReferenceSpec explicit_list(std::vector<Covariance> covariances);

  ReferenceMode mode() const noexcept { return mode_; }
  Certificate certificate() const noexcept { return certificate_; }
  bool synchronized() const noexcept {
    return mode_ == ReferenceMode::SynchronizedDeterministic || mode_ == ReferenceMode::SynchronizedPublic ||
           mode_ == ReferenceMode::PrefixObservable;
  }
  const std::shared_ptr<const train::Trajectory>& ghost_trajectory() const noexcept { return ghost_; }
  const std::vector<Covariance>& explicit_covariances() const noexcept { return explicit_; }

 private:
  ReferenceSpec(ReferenceMode mode, Certificate cert) : mode_(mode), certificate_(cert) {}

  ReferenceMode mode_;
  Certificate certificate_;
  std::shared_ptr<const train::Trajectory> ghost_;
  std::vector<Covariance> explicit_;
};

struct ReferenceCovariance {
  Covariance cov;
  // True when the comparison cost is zero by certificate.
  bool certified;
};

// Reference at step t. Ghost mode needs the ghost schedule state and the
// ghost history view for the same step; it emits from them and the caller
// advances the ghost schedule afterwards.
ReferenceCovariance reference_covariance(const ReferenceSpec& ref, const Covariance& actual, std::size_t t,
                                         Schedule* ghost_state = nullptr, const HistoryView* ghost_view = nullptr);

// Drives reference_covariance step by step, replaying the ghost trajectory
// when the reference is ghost-adaptive.
class ReferenceTracker {
 public:
  ReferenceTracker(ReferenceSpec ref, const ScheduleSpec& spec);

  // Must be called for t = 1, 2, ... in order.
  ReferenceCovariance at(std::size_t t, const Covariance& actual);
  const ReferenceSpec& reference() const noexcept { return ref_; }

 private:
  ReferenceSpec ref_;
  std::optional<Schedule> ghost_;
  std::size_t next_t_ = 1;
};

}  // namespace vperturb::schedule
