#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "vperturb/errors.hpp"
#include "vperturb/schedule/schedule.hpp"

using namespace vperturb;
using schedule::ScheduleKind;
using schedule::ScheduleSpec;
using testsupport::MatrixXd;
using testsupport::VectorXd;

namespace {

train::Trajectory small_trajectory(std::size_t d = 3, std::size_t horizon = 10) {
  const auto problem = testsupport::quadratic_problem(d);
  return train::run_sgd(problem, testsupport::sgd(horizon));
}

ScheduleSpec spec_of(ScheduleKind kind, std::size_t d, std::size_t horizon) {
  ScheduleSpec s;
  s.kind = kind;
  s.dim = d;
  s.horizon = horizon;
  if (kind == ScheduleKind::FixedDense) {
    MatrixXd m = 0.02 * MatrixXd::Identity(static_cast<int>(d), static_cast<int>(d));
    if (d > 1) m(0, 1) = m(1, 0) = 0.005;
    s.covariances = {gauss::Covariance::dense(m)};
  }
  return s;
}

const ScheduleKind kAllKinds[] = {ScheduleKind::FixedIsotropic,   ScheduleKind::FixedDense,
                                  ScheduleKind::AdaptiveScalar,   ScheduleKind::AdaptiveDiagonal,
                                  ScheduleKind::AdamProportional, ScheduleKind::AdamInverse,
                                  ScheduleKind::LowRankRidge};

}  // namespace

TEST_CASE("schedule kind names round trip") {
  for (auto k : kAllKinds) CHECK(schedule::schedule_kind_from_string(schedule::to_string(k)) == k);
  CHECK_THROWS_AS(schedule::schedule_kind_from_string("langevin"), InputError);
}

TEST_CASE("dependence classes") {
  CHECK(spec_of(ScheduleKind::FixedIsotropic, 2, 5).dependence() == schedule::Dependence::Deterministic);
  CHECK(spec_of(ScheduleKind::FixedDense, 2, 5).dependence() == schedule::Dependence::Deterministic);
  auto s = spec_of(ScheduleKind::AdaptiveScalar, 2, 5);
  CHECK(s.dependence() == schedule::Dependence::DataDependent);
  s.stat = schedule::kPublicStat;
  CHECK(s.dependence() == schedule::Dependence::Public);
  s.stat = schedule::kVirtualStepSqEma;
  CHECK(s.dependence() == schedule::Dependence::PrefixObservable);
  CHECK(spec_of(ScheduleKind::AdamInverse, 2, 5).dependence() == schedule::Dependence::DataDependent);
}

TEST_CASE("emitted covariances only use the strict past") {
  const auto traj = small_trajectory(3, 9);
  for (auto kind : kAllKinds) {
    CAPTURE(schedule::to_string(kind));
    const auto spec = spec_of(kind, 3, traj.horizon());
    const auto base = schedule::replay_covariances(spec, traj);
    REQUIRE(base.size() == traj.horizon() - 1);
    for (std::size_t t = 1; t < traj.horizon(); ++t) {
      train::Trajectory bad = traj;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t k = t; k <= bad.steps.size(); ++k) {
        auto& rec = bad.steps[k - 1];
        rec.g.setConstant(nan);
        for (auto& g : rec.g_sub) g.setConstant(nan);
        for (auto& j : rec.batch) j = ~j;
        if (k > t) rec.w.setConstant(nan);  // W_t itself is part of H_{t-1}
      }
      // replay only up to step t: later steps legitimately see the corruption
      schedule::Schedule sched(spec);
      for (std::size_t k = 1; k < t; ++k) {
        const auto c = sched.next_covariance(schedule::make_history_view(bad, k));
        sched.advance(c, bad.steps[k - 1].g);
      }
      const auto again = sched.next_covariance(schedule::make_history_view(bad, t));
      CAPTURE(t);
      CHECK(again == base[t - 1]);
      CHECK(again.materialize().allFinite());
    }
  }
}

TEST_CASE("advance must follow an emission of the same covariance") {
  const auto traj = small_trajectory();
  schedule::Schedule sched(spec_of(ScheduleKind::AdaptiveDiagonal, 3, traj.horizon()));
  CHECK_THROWS_AS(sched.advance(gauss::Covariance::isotropic(3, 1.0), traj.steps[0].g), SequencingError);
  const auto view = schedule::make_history_view(traj, 1);
  const auto c1 = sched.next_covariance(view);
  CHECK_THROWS_AS(sched.advance(gauss::Covariance::isotropic(3, 123.0), traj.steps[0].g), SequencingError);
  sched.advance(c1, traj.steps[0].g);
  CHECK_THROWS_AS(sched.advance(c1, traj.steps[0].g), SequencingError);
  // a view for the wrong step is refused
  CHECK_THROWS_AS(sched.next_covariance(view), SequencingError);
  CHECK(sched.step() == 2);
}

TEST_CASE("accumulated covariance is the running sum of emissions") {
  const auto traj = small_trajectory(3, 12);
  for (auto kind : kAllKinds) {
    schedule::Schedule sched(spec_of(kind, 3, traj.horizon()));
    MatrixXd sum = MatrixXd::Zero(3, 3);
    CHECK(sched.accumulated().is_zero());
    for (std::size_t t = 1; t < traj.horizon(); ++t) {
      const auto c = sched.next_covariance(schedule::make_history_view(traj, t));
      CHECK((sched.accumulated().materialize() - sum).norm() < 1e-12);
      sum += c.materialize();
      sched.advance(c, traj.steps[t - 1].g);
    }
    CHECK((sched.accumulated().materialize() - sum).norm() < 1e-12);
  }
}

TEST_CASE("fixed isotropic stays isotropic and constant") {
  const auto traj = small_trajectory(2, 6);
  auto spec = spec_of(ScheduleKind::FixedIsotropic, 2, traj.horizon());
  spec.sigma = 0.3;
  for (const auto& c : schedule::replay_covariances(spec, traj)) {
    REQUIRE(c.kind() == gauss::Covariance::Kind::Isotropic);
    CHECK(c.get_if<gauss::Covariance::Isotropic>()->sigma_sq == 0.3 * 0.3);
  }
}

TEST_CASE("adaptive scalar follows an EMA of past squared gradient norms") {
  const auto traj = small_trajectory(3, 10);
  auto spec = spec_of(ScheduleKind::AdaptiveScalar, 3, traj.horizon());
  spec.sigma0 = 0.2;
  spec.c = 0.5;
  const auto covs = schedule::replay_covariances(spec, traj);
  double q = 0.0;
  for (std::size_t t = 1; t < traj.horizon(); ++t) {
    const double want = 0.04 * (1.0 + 0.5 * q);
    CHECK(covs[t - 1].trace() / 3.0 == doctest::Approx(want).epsilon(1e-12));
    q = 0.9 * q + 0.1 * traj.steps[t - 1].g.squaredNorm();
  }
}

TEST_CASE("adam-like rules use the previous second moment") {
  const auto traj = small_trajectory(3, 8);
  for (auto kind : {ScheduleKind::AdamProportional, ScheduleKind::AdamInverse}) {
    auto spec = spec_of(kind, 3, traj.horizon());
    const auto covs = schedule::replay_covariances(spec, traj);
    VectorXd v = VectorXd::Zero(3);
    for (std::size_t t = 1; t < traj.horizon(); ++t) {
      const double r2 = spec.rho * spec.rho;
      VectorXd want(3);
      for (int j = 0; j < 3; ++j) {
        const double root = std::sqrt(v(j)) + spec.eps;
        want(j) = (kind == ScheduleKind::AdamProportional ? r2 * root : r2 / root) + spec.lambda0;
      }
      CHECK((covs[t - 1].diagonal_entries() - want).norm() <= 1e-12 * want.norm());
      v = spec.beta * v + (1 - spec.beta) * traj.steps[t - 1].g.cwiseProduct(traj.steps[t - 1].g);
    }
  }
}

TEST_CASE("inverse square root rho schedule") {
  auto spec = spec_of(ScheduleKind::AdamProportional, 2, 10);
  spec.rho = 0.4;
  spec.rho_schedule = schedule::RhoSchedule::InverseSqrtT;
  CHECK(spec.rho_at(1) == doctest::Approx(0.4));
  CHECK(spec.rho_at(4) == doctest::Approx(0.2));
}

TEST_CASE("low-rank ridge spans recent gradient directions") {
  const auto traj = small_trajectory(4, 8);
  auto spec = spec_of(ScheduleKind::LowRankRidge, 4, traj.horizon());
  const auto covs = schedule::replay_covariances(spec, traj);
  // t = 1 has no past gradient: pure ridge
  CHECK((covs[0].materialize() - spec.lambda0 * MatrixXd::Identity(4, 4)).norm() < 1e-14);
  for (std::size_t t = 3; t < traj.horizon(); ++t) {
    MatrixXd want = spec.lambda0 * MatrixXd::Identity(4, 4);
    for (std::size_t k : {t - 1, t - 2}) {
      const VectorXd u = traj.steps[k - 1].g.normalized();
      want += spec.rho * spec.rho * u * u.transpose();
    }
    CHECK((covs[t - 1].materialize() - want).norm() < 1e-12);
  }
}

TEST_CASE("spec validation") {
  auto s = spec_of(ScheduleKind::FixedIsotropic, 2, 5);
  s.sigma = -1;
  CHECK_THROWS(s.validate());
  auto d = spec_of(ScheduleKind::FixedDense, 2, 5);
  d.covariances.clear();
  CHECK_THROWS(d.validate());
  auto a = spec_of(ScheduleKind::AdaptiveScalar, 2, 5);
  a.stat = "nonsense";
  CHECK_THROWS(a.validate());
}

TEST_CASE("synchronized references require a matching certificate") {
  const auto det = spec_of(ScheduleKind::FixedIsotropic, 2, 6);
  CHECK(schedule::ReferenceSpec::synchronized_deterministic(det).certificate() == schedule::Certificate::Deterministic);
  const auto adaptive = spec_of(ScheduleKind::AdaptiveScalar, 2, 6);
  CHECK_THROWS_AS(schedule::ReferenceSpec::synchronized_deterministic(adaptive), AdmissibilityError);
  CHECK_THROWS_AS(schedule::ReferenceSpec::synchronized_public(adaptive, 0), AdmissibilityError);
  CHECK_THROWS_AS(schedule::ReferenceSpec::prefix_observable(adaptive), AdmissibilityError);
  auto pub = adaptive;
  pub.stat = schedule::kPublicStat;
  pub.public_seed = 9;
  CHECK(schedule::ReferenceSpec::synchronized_public(pub, 9).certificate() == schedule::Certificate::PublicPredictable);
  CHECK_THROWS_AS(schedule::ReferenceSpec::synchronized_public(pub, 10), AdmissibilityError);
  auto virt = adaptive;
  virt.stat = schedule::kVirtualStepSqEma;
  CHECK(schedule::ReferenceSpec::prefix_observable(virt).synchronized());
}

TEST_CASE("synchronized references are certified and reproduce the actual covariance") {
  const auto traj = small_trajectory(2, 6);
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, 2, traj.horizon());
  schedule::ReferenceTracker tr(schedule::ReferenceSpec::synchronized_deterministic(spec), spec);
  const auto covs = schedule::replay_covariances(spec, traj);
  for (std::size_t t = 1; t < traj.horizon(); ++t) {
    const auto r = tr.at(t, covs[t - 1]);
    CHECK(r.certified);
    CHECK(r.cov == covs[t - 1]);
  }
}

TEST_CASE("ghost references replay the schedule on an independent run") {
  const auto traj = small_trajectory(3, 8);
  auto problem = testsupport::quadratic_problem(3, 64, 128, 7);
  auto ds = problem.data_spec;
  ds.seed += 1000;
  auto ghost = std::make_shared<const train::Trajectory>(
      train::run_sgd(train::make_problem(problem.model_spec, ds), testsupport::sgd(8, 8, 0.1, 4)));
  const auto spec = spec_of(ScheduleKind::AdaptiveDiagonal, 3, traj.horizon());
  schedule::ReferenceTracker tr(schedule::ReferenceSpec::ghost(ghost), spec);
  const auto covs = schedule::replay_covariances(spec, traj);
  const auto ghost_covs = schedule::replay_covariances(spec, *ghost);
  for (std::size_t t = 1; t < traj.horizon(); ++t) {
    const auto r = tr.at(t, covs[t - 1]);
    CHECK_FALSE(r.certified);
    CHECK(r.cov == ghost_covs[t - 1]);
  }
  // out-of-order use is refused
  schedule::ReferenceTracker tr2(schedule::ReferenceSpec::ghost(ghost), spec);
  CHECK_THROWS(tr2.at(2, covs[1]));
}

TEST_CASE("explicit references cycle through the list and hold the last entry") {
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, 2, 6);
  const std::vector<gauss::Covariance> list{gauss::Covariance::isotropic(2, 1.0), gauss::Covariance::isotropic(2, 2.0)};
  schedule::ReferenceTracker tr(schedule::ReferenceSpec::explicit_list(list), spec);
  const auto actual = gauss::Covariance::isotropic(2, 0.01);
  CHECK(tr.at(1, actual).cov == list[0]);
  CHECK(tr.at(2, actual).cov == list[1]);
  CHECK(tr.at(3, actual).cov == list[1]);
  CHECK_FALSE(tr.at(4, actual).certified);
}
