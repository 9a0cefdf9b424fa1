#include "vperturb/schedule/schedule.hpp"

#include <cmath>

#include "vperturb/errors.hpp"
#include "vperturb/gauss/random.hpp"

namespace vperturb::schedule {

using gauss::Matrix;

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::FixedIsotropic: return "fixed_isotropic";
    case ScheduleKind::FixedDense: return "fixed_dense";
    case ScheduleKind::AdaptiveScalar: return "adaptive_scalar";
    case ScheduleKind::AdaptiveDiagonal: return "adaptive_diagonal";
    case ScheduleKind::AdamProportional: return "adam_proportional";
    case ScheduleKind::AdamInverse: return "adam_inverse";
    case ScheduleKind::LowRankRidge: return "lowrank_ridge";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  for (auto k : {ScheduleKind::FixedIsotropic, ScheduleKind::FixedDense, ScheduleKind::AdaptiveScalar,
                 ScheduleKind::AdaptiveDiagonal, ScheduleKind::AdamProportional, ScheduleKind::AdamInverse,
                 ScheduleKind::LowRankRidge}) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown schedule kind '" + name + "'");
}

std::string to_string(Dependence dep) {
  switch (dep) {
    case Dependence::Deterministic: return "deterministic";
    case Dependence::Public: return "public";
    case Dependence::PrefixObservable: return "prefix_observable";
    case Dependence::DataDependent: return "data_dependent";
  }
  return "unknown";
}

void ScheduleSpec::validate() const {
  if (dim == 0) throw InputError("schedule dimension must be positive");
  if (horizon < 2) throw InputError("schedule horizon must be at least 2");
  const auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || !(v > 0.0)) throw InputError(std::string("schedule.") + name + " must be positive");
  };
  switch (kind) {
    case ScheduleKind::FixedIsotropic: positive(sigma, "sigma"); break;
    case ScheduleKind::FixedDense:
      if (covariances.empty()) throw InputError("fixed_dense schedule needs at least one covariance");
      for (const auto& c : covariances) {
        if (c.dim() != dim) throw InputError("fixed_dense covariance has wrong dimension");
        if (c.is_zero()) throw InputError("fixed_dense covariance must be positive definite");
      }
      break;
    case ScheduleKind::AdaptiveScalar:
      positive(sigma0, "sigma0");
      if (!(c >= 0.0)) throw InputError("schedule.c must be nonnegative");
      if (stat != kGradSqEma && stat != kVirtualStepSqEma && stat != kPublicStat) {
        throw InputError("unknown schedule.stat '" + stat + "'");
      }
      break;
    case ScheduleKind::AdaptiveDiagonal:
      positive(sigma0, "sigma0");
      if (!(c >= 0.0)) throw InputError("schedule.c must be nonnegative");
      if (!(beta > 0.0 && beta < 1.0)) throw InputError("schedule.beta must lie in (0, 1)");
      break;
    case ScheduleKind::AdamProportional:
    case ScheduleKind::AdamInverse:
      if (!(beta > 0.0 && beta < 1.0)) throw InputError("schedule.beta must lie in (0, 1)");
      positive(rho, "rho");
      positive(eps, "eps");
      positive(lambda0, "lambda0");
      break;
    case ScheduleKind::LowRankRidge:
      positive(rho, "rho");
      positive(lambda0, "lambda0");
      if (rank == 0) throw InputError("schedule.rank must be positive");
      break;
  }
}

Dependence ScheduleSpec::dependence() const {
  switch (kind) {
    case ScheduleKind::FixedIsotropic:
    case ScheduleKind::FixedDense: return Dependence::Deterministic;
    case ScheduleKind::AdaptiveScalar:
      if (stat == kPublicStat) return Dependence::Public;
      if (stat == kVirtualStepSqEma) return Dependence::PrefixObservable;
      return Dependence::DataDependent;
    default: return Dependence::DataDependent;
  }
}

double ScheduleSpec::rho_at(std::size_t t) const {
  return rho_schedule == RhoSchedule::Constant ? rho : rho / std::sqrt(static_cast<double>(t));
}

//---------------------------------------------------------------------------//

Schedule::Schedule(ScheduleSpec spec)
    : spec_(std::move(spec)), accumulated_(Covariance::zero(spec_.dim == 0 ? 1 : spec_.dim)) {
  spec_.validate();
  moment_ = Vector::Zero(static_cast<Eigen::Index>(spec_.dim));
}

Covariance Schedule::compute(const HistoryView& view) const {
  const std::size_t t = view.step();
  const auto d = static_cast<Eigen::Index>(spec_.dim);
  switch (spec_.kind) {
    case ScheduleKind::FixedIsotropic: return Covariance::isotropic(spec_.dim, spec_.sigma * spec_.sigma);
    case ScheduleKind::FixedDense: {
      const std::size_t idx = std::min(t, spec_.covariances.size()) - 1;
      return spec_.covariances[idx];
    }
    case ScheduleKind::AdaptiveScalar: {
      double q = 0.0;
      if (spec_.stat == kPublicStat) {
        if (t > 1) {
          gauss::RandomStream u(spec_.public_seed, gauss::stream_id({0x9b1cull, t - 1}));
          q = -std::log(u.uniform());
        }
      } else {
        const auto s = view.stat(spec_.stat);
        if (!s) throw InputError("history view lacks statistic '" + spec_.stat + "'");
        q = *s;
      }
      return Covariance::isotropic(spec_.dim, spec_.sigma0 * spec_.sigma0 * (1.0 + spec_.c * q));
    }
    case ScheduleKind::AdaptiveDiagonal: {
      Vector s = (1.0 + spec_.c * moment_.array()).matrix() * (spec_.sigma0 * spec_.sigma0);
      return Covariance::diagonal(std::move(s));
    }
    case ScheduleKind::AdamProportional:
    case ScheduleKind::AdamInverse: {
      const double rho_sq = spec_.rho_at(t) * spec_.rho_at(t);
      const Eigen::ArrayXd root = moment_.array().sqrt() + spec_.eps;
      Eigen::ArrayXd s;
      if (spec_.kind == ScheduleKind::AdamProportional) {
        s = rho_sq * root;
      } else {
        s = rho_sq / root;
      }
      s += spec_.lambda0;
      return Covariance::diagonal(s.matrix());
    }
    case ScheduleKind::LowRankRidge: {
      std::vector<Vector> cols;
      for (std::size_t k = view.past_count(); k >= 1 && cols.size() < spec_.rank; --k) {
        const Vector& g = view.gradient(k);
        const double n = g.norm();
        if (n > 0.0 && std::isfinite(n)) cols.push_back(g / n);
      }
      Matrix u(d, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) u.col(static_cast<Eigen::Index>(j)) = cols[j];
      const double rho_sq = spec_.rho_at(t) * spec_.rho_at(t);
      return Covariance::low_rank_ridge(spec_.lambda0, std::move(u),
                                        Vector::Constant(static_cast<Eigen::Index>(cols.size()), rho_sq));
    }
  }
  throw InputError("unhandled schedule kind");
}

Covariance Schedule::next_covariance(const HistoryView& view) {
  if (view.step() != t_) {
    throw SequencingError("history view is for step " + std::to_string(view.step()) + " but schedule is at step " +
                          std::to_string(t_));
  }
  if (t_ >= spec_.horizon) throw InputError("schedule horizon exceeded");
  if (view.dim() != spec_.dim) throw InputError("history view dimension differs from schedule dimension");
  if (!pending_) pending_ = compute(view);
  return *pending_;
}

void Schedule::advance(const Covariance& emitted_cov, const std::optional<Vector>& g_current) {
  if (!pending_) {
    throw SequencingError("advance at step " + std::to_string(t_) + " before the covariance was emitted");
  }
  if (!(emitted_cov == *pending_)) {
    throw SequencingError("advance received a covariance that was not emitted at step " + std::to_string(t_));
  }
  const bool uses_moment = spec_.kind == ScheduleKind::AdamProportional || spec_.kind == ScheduleKind::AdamInverse ||
                           spec_.kind == ScheduleKind::AdaptiveDiagonal;
  if (uses_moment && g_current) {
    if (g_current->size() != moment_.size()) throw InputError("gradient dimension differs from schedule dimension");
    const double b = spec_.beta;
    if (spec_.kind == ScheduleKind::AdaptiveDiagonal) {
      moment_ = b * moment_ + (1.0 - b) * g_current->cwiseAbs();
    } else {
      moment_ = b * moment_ + (1.0 - b) * g_current->cwiseProduct(*g_current);
    }
  }
  accumulated_ = gauss::add(accumulated_, emitted_cov);
  emitted_.push_back(emitted_cov);
  pending_.reset();
  ++t_;
}

std::vector<Covariance> replay_covariances(const ScheduleSpec& spec, const train::Trajectory& traj) {
  Schedule sched(spec);
  std::vector<Covariance> out;
  for (std::size_t t = 1; t < traj.horizon(); ++t) {
    const auto view = make_history_view(traj, t);
    auto cov = sched.next_covariance(view);
    sched.advance(cov, traj.steps[t - 1].g);
    out.push_back(std::move(cov));
  }
  return out;
}

//---------------------------------------------------------------------------//
// References
//---------------------------------------------------------------------------//

std::string to_string(ReferenceMode mode) {
  switch (mode) {
    case ReferenceMode::SynchronizedDeterministic: return "synchronized_deterministic";
    case ReferenceMode::SynchronizedPublic: return "synchronized_public";
    case ReferenceMode::PrefixObservable: return "prefix_observable";
    case ReferenceMode::Ghost: return "ghost";
    case ReferenceMode::Explicit: return "explicit";
  }
  return "unknown";
}

std::string to_string(Certificate cert) {
  switch (cert) {
    case Certificate::Deterministic: return "deterministic";
    case Certificate::PublicPredictable: return "public_predictable";
    case Certificate::PrefixObservable: return "prefix_observable";
    case Certificate::GhostAdaptive: return "ghost_adaptive";
    case Certificate::None: return "none";
  }
  return "unknown";
}

ReferenceMode reference_mode_from_string(const std::string& name) {
  for (auto m : {ReferenceMode::SynchronizedDeterministic, ReferenceMode::SynchronizedPublic,
                 ReferenceMode::PrefixObservable, ReferenceMode::Ghost, ReferenceMode::Explicit}) {
    if (to_string(m) == name) return m;
  }
  throw InputError("unknown reference mode '" + name + "'");
}

namespace {

[[noreturn]] void refuse(const ScheduleSpec& spec, const char* mode) {
  throw AdmissibilityError(std::string("cannot certify a ") + mode + " reference for schedule '" +
                           to_string(spec.kind) + "' (dependence: " + to_string(spec.dependence()) +
                           "); predictable is not the same as synchronizable, use a ghost or explicit reference");
}

}  // namespace

ReferenceSpec ReferenceSpec::synchronized_deterministic(const ScheduleSpec& spec) {
  if (spec.dependence() != Dependence::Deterministic) refuse(spec, "synchronized_deterministic");
  return ReferenceSpec(ReferenceMode::SynchronizedDeterministic, Certificate::Deterministic);
}

ReferenceSpec ReferenceSpec::synchronized_public(const ScheduleSpec& spec, std::uint64_t public_seed) {
  if (spec.dependence() != Dependence::Public) refuse(spec, "synchronized_public");
  if (spec.public_seed != public_seed) {
    throw AdmissibilityError("public seed of the reference differs from the schedule's public seed");
  }
  return ReferenceSpec(ReferenceMode::SynchronizedPublic, Certificate::PublicPredictable);
}

ReferenceSpec ReferenceSpec::prefix_observable(const ScheduleSpec& spec) {
  if (spec.dependence() != Dependence::PrefixObservable) refuse(spec, "prefix_observable");
  return ReferenceSpec(ReferenceMode::PrefixObservable, Certificate::PrefixObservable);
}

ReferenceSpec ReferenceSpec::ghost(std::shared_ptr<const train::Trajectory> ghost_trajectory) {
  if (!ghost_trajectory) throw InputError("ghost reference needs a ghost trajectory");
  ReferenceSpec r(ReferenceMode::Ghost, Certificate::GhostAdaptive);
  r.ghost_ = std::move(ghost_trajectory);
  return r;
}

ReferenceSpec ReferenceSpec::explicit_list(std::vector<Covariance> covariances) {
  if (covariances.empty()) throw InputError("explicit reference needs at least one covariance");
  ReferenceSpec r(ReferenceMode::Explicit, Certificate::None);
  r.explicit_ = std::move(covariances);
  return r;
}

ReferenceCovariance reference_covariance(const ReferenceSpec& ref, const Covariance& actual, std::size_t t,
                                         Schedule* ghost_state, const HistoryView* ghost_view) {
  switch (ref.mode()) {
    case ReferenceMode::SynchronizedDeterministic:
    case ReferenceMode::SynchronizedPublic:
    case ReferenceMode::PrefixObservable: return {actual, true};
    case ReferenceMode::Ghost: {
      if (!ghost_state || !ghost_view) throw InputError("ghost reference needs the ghost schedule state and view");
      return {ghost_state->next_covariance(*ghost_view), false};
    }
    case ReferenceMode::Explicit: {
      const auto& list = ref.explicit_covariances();
      const auto& cov = list[std::min(t, list.size()) - 1];
      if (cov.dim() != actual.dim()) throw InputError("explicit reference has wrong dimension");
      return {cov, cov == actual};
    }
  }
  throw InputError("unhandled reference mode");
}

ReferenceTracker::ReferenceTracker(ReferenceSpec ref, const ScheduleSpec& spec) : ref_(std::move(ref)) {
  if (ref_.mode() == ReferenceMode::Ghost) {
    if (spec.dependence() == Dependence::PrefixObservable) {
      throw InputError("ghost references for virtual-prefix statistics are not supported");
    }
    const auto& g = *ref_.ghost_trajectory();
    if (g.meta.dim != spec.dim) throw InputError("ghost trajectory dimension differs from schedule");
    if (g.horizon() < spec.horizon) throw InputError("ghost trajectory shorter than the schedule horizon");
    ghost_.emplace(spec);
  }
}

ReferenceCovariance ReferenceTracker::at(std::size_t t, const Covariance& actual) {
  if (t != next_t_) throw SequencingError("reference tracker called out of order");
  ++next_t_;
  if (ref_.mode() != ReferenceMode::Ghost) return reference_covariance(ref_, actual, t);
  const auto& g = *ref_.ghost_trajectory();
  const auto view = make_history_view(g, t);
  auto out = reference_covariance(ref_, actual, t, &*ghost_, &view);
  ghost_->advance(out.cov, g.steps[t - 1].g);
  return out;
}

}  // namespace vperturb::schedule
