#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "support.hpp"
#include "vperturb/errors.hpp"
#include "vperturb/gauss/gaussian.hpp"
#include "vperturb/proxies/proxies.hpp"

using namespace vperturb;
using gauss::Covariance;
using proxies::DeviationMode;
using schedule::ScheduleKind;
using testsupport::MatrixXd;
using testsupport::VectorXd;

namespace {

struct Fixture {
  train::Problem problem;
  train::Trajectory traj;
};

Fixture fixture(std::size_t d = 3, std::size_t horizon = 12, std::size_t n_eval = 128) {
  Fixture f{testsupport::quadratic_problem(d, 64, n_eval), {}};
  f.traj = train::run_sgd(f.problem, testsupport::sgd(horizon));
  return f;
}

schedule::ScheduleSpec spec_of(ScheduleKind kind, const train::Trajectory& traj) {
  schedule::ScheduleSpec s;
  s.kind = kind;
  s.dim = traj.meta.dim;
  s.horizon = traj.horizon();
  return s;
}

proxies::ProxyOptions options(const train::Trajectory& traj, DeviationMode mode = DeviationMode::Dev) {
  proxies::ProxyOptions o;
  o.checkpoints = proxies::all_checkpoints(traj.horizon());
  o.mc_samples = 50;
  o.mc_samples_final = 200;
  o.deviation_mode = mode;
  o.seed = 17;
  return o;
}

std::shared_ptr<const train::Trajectory> ghost_of(const Fixture& f) {
  auto ds = f.problem.data_spec;
  ds.seed += 1000;
  auto cfg = f.traj.meta.sgd;
  cfg.seed += 1;
  return std::make_shared<const train::Trajectory>(
      train::run_sgd(train::make_problem(f.problem.model_spec, ds), cfg));
}

const MatrixXd& curvature(const train::Problem& p) {
  return static_cast<const train::QuadraticModel&>(*p.model).curvature();
}

}  // namespace

TEST_CASE("subbatch scaling") {
  CHECK(proxies::subbatch_scaling(4, 4) == 0.5);
  CHECK(proxies::subbatch_scaling(3, 1) == doctest::Approx(2.0 * 3 / 16));
  CHECK(proxies::subbatch_scaling(1, 3) == proxies::subbatch_scaling(3, 1));
  CHECK_THROWS(proxies::subbatch_scaling(0, 3));
}

TEST_CASE("two-part fluctuation estimators agree") {
  gauss::RandomStream rng(3, 3);
  const auto w = Covariance::diagonal(testsupport::random_positive(4, rng));
  const VectorXd g1 = testsupport::random_vector(4, rng);
  const VectorXd g2 = testsupport::random_vector(4, rng);
  const std::vector<VectorXd> gs{g1, g2};
  CHECK(proxies::fluctuation_proxy_k(gs, w) == doctest::Approx(proxies::fluctuation_proxy(g1, g2, 5, 5, w)));
  CHECK(proxies::deviation_proxy(g1, g2, w) == doctest::Approx(gauss::mahalanobis_sq(g1 - g2, w)));
}

TEST_CASE("fluctuation proxy is unbiased for the half-batch gradient variance") {
  // g_k = mu + noise_k with noise ~ N(0, s^2 I); E 0.5 |g1 - g2|^2 = d s^2
  gauss::RandomStream rng(4, 4);
  const auto id = Covariance::isotropic(3, 1.0);
  const int reps = 20000;
  double sum = 0;
  for (int r = 0; r < reps; ++r) {
    const VectorXd g1 = testsupport::random_vector(3, rng, 0.5);
    const VectorXd g2 = testsupport::random_vector(3, rng, 0.5);
    sum += proxies::fluctuation_proxy(g1, g2, 4, 4, id);
  }
  CHECK(sum / reps == doctest::Approx(0.75).epsilon(0.03));
}

TEST_CASE("gradient sensitivity of a quadratic matches the trace formula") {
  const auto f = fixture(3);
  const MatrixXd& a = curvature(f.problem);
  gauss::RandomStream pick(5, 5);
  const auto acc = Covariance::dense(testsupport::random_spd(3, pick, 0.05) * 0.1);
  const auto weight = Covariance::diagonal(testsupport::random_positive(3, pick));
  gauss::RandomStream rng(6, 6);
  const auto est = proxies::sensitivity_proxy(*f.problem.model, VectorXd::Zero(3), acc, weight, f.problem.eval, 20000,
                                              rng);
  REQUIRE(est.has_value());
  const MatrixXd wi = weight.materialize().inverse();
  const double want = (a.transpose() * wi * a * acc.materialize()).trace();
  CHECK(std::abs(est->mean - want) < 5 * est->se);
  gauss::RandomStream rng2(6, 6);
  CHECK(proxies::sensitivity_proxy(*f.problem.model, VectorXd::Zero(3), Covariance::zero(3), weight, f.problem.eval,
                                   10, rng2)
            ->mean == 0.0);
  train::SampleSet empty;
  CHECK_FALSE(proxies::sensitivity_proxy(*f.problem.model, VectorXd::Zero(3), acc, weight, empty, 10, rng2));
}

TEST_CASE("output sensitivity of a quadratic matches minus half the trace") {
  const auto f = fixture(4);
  const MatrixXd& a = curvature(f.problem);
  gauss::RandomStream pick(7, 7);
  const auto acc = Covariance::dense(testsupport::random_spd(4, pick) * 0.05);
  gauss::RandomStream rng(8, 8);
  const auto est = proxies::output_sensitivity_proxy(*f.problem.model, VectorXd::Ones(4), acc, f.problem.train, 50000,
                                                     rng);
  const double want = -0.5 * (a * acc.materialize()).trace();
  CHECK(std::abs(est.mean - want) < 4 * est.se);
  CHECK(proxies::penalty_difference(0.3, -0.2) == doctest::Approx(0.5));
}

TEST_CASE("Algorithm 1 under a fixed isotropic schedule") {
  const auto f = fixture();
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, f.traj);
  const auto opts = options(f.traj);
  const auto r = proxies::run_algorithm1(f.problem, f.traj, spec, schedule::ReferenceSpec::synchronized_deterministic(spec),
                                         opts);
  REQUIRE(r.checkpoints.size() == f.traj.horizon() - 1);
  double b = 0, bs = 0;
  for (const auto& c : r.checkpoints) {
    CHECK(c.certified);
    CHECK(c.c_hat == 0.0);
    CHECK(c.kappa == 1.0);
    CHECK(c.tr_sigma_t == doctest::Approx(3 * 0.01));
    CHECK(c.tr_sigma_1t == doctest::Approx(3 * 0.01 * static_cast<double>(c.t - 1)));
    REQUIRE(c.gamma_hat.has_value());
    CHECK(c.v_hat >= 0.0);
    // analytic population gradient
    const auto& rec = f.traj.steps[c.t - 1];
    const VectorXd mu = train::population_gradient(f.problem, rec.w).value;
    CHECK(c.v_hat == doctest::Approx((rec.g - mu).squaredNorm() / 0.01));
    b += 2 * c.eta * c.eta * (c.v_hat + *c.gamma_hat) + c.c_hat;
    bs += c.eta * c.eta * (c.v_hat + *c.gamma_hat) + c.c_hat;
  }
  REQUIRE(r.r_hat.has_value());
  CHECK(*r.r_hat == doctest::Approx(std::abs(r.delta_eval->mean - r.delta_train.mean)));
  CHECK(r.b_hat == doctest::Approx(b + *r.r_hat).epsilon(1e-12));
  CHECK(r.b_hat_sharp == doctest::Approx(bs + *r.r_hat).epsilon(1e-12));
  CHECK(r.b_hat_sharp <= r.b_hat);
  CHECK(r.tr_sigma_final == doctest::Approx(3 * 0.01 * 11));
  CHECK(r.checkpoints[0].gamma_hat.value() == 0.0);
}

TEST_CASE("dedicated fixed isotropic path reproduces Algorithm 1 bit for bit") {
  const auto f = fixture(3, 10);
  auto spec = spec_of(ScheduleKind::FixedIsotropic, f.traj);
  spec.sigma = 0.07;
  for (auto mode : {DeviationMode::Dev, DeviationMode::Fluc}) {
    const auto opts = options(f.traj, mode);
    const auto a = proxies::run_algorithm1(f.problem, f.traj, spec,
                                           schedule::ReferenceSpec::synchronized_deterministic(spec), opts);
    const auto b = proxies::run_fixed_isotropic(f.problem, f.traj, 0.07, opts);
    REQUIRE(a.checkpoints.size() == b.checkpoints.size());
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
      CHECK(a.checkpoints[i].v_hat == b.checkpoints[i].v_hat);
      CHECK(a.checkpoints[i].gamma_hat == b.checkpoints[i].gamma_hat);
      CHECK(a.checkpoints[i].c_hat == b.checkpoints[i].c_hat);
    }
    CHECK(a.delta_train.mean == b.delta_train.mean);
    CHECK(a.b_hat == b.b_hat);
    CHECK(a.b_hat_sharp == b.b_hat_sharp);
  }
}

TEST_CASE("results do not depend on the thread count") {
  const auto f = fixture(3, 14);
  const auto spec = spec_of(ScheduleKind::AdaptiveDiagonal, f.traj);
  const auto ref = schedule::ReferenceSpec::ghost(ghost_of(f));
  const auto opts = options(f.traj);
  setenv("VPERTURB_THREADS", "1", 1);
  const auto a = proxies::run_algorithm1(f.problem, f.traj, spec, ref, opts);
  setenv("VPERTURB_THREADS", "5", 1);
  const auto b = proxies::run_algorithm1(f.problem, f.traj, spec, ref, opts);
  unsetenv("VPERTURB_THREADS");
  CHECK(proxies::to_json(a) == proxies::to_json(b));
}

TEST_CASE("ghost references price the covariance mismatch") {
  const auto f = fixture(3, 12);
  for (auto kind : {ScheduleKind::AdaptiveScalar, ScheduleKind::AdaptiveDiagonal, ScheduleKind::AdamProportional}) {
    const auto spec = spec_of(kind, f.traj);
    const auto r = proxies::run_algorithm1(f.problem, f.traj, spec, schedule::ReferenceSpec::ghost(ghost_of(f)),
                                           options(f.traj));
    bool positive = false;
    for (const auto& c : r.checkpoints) {
      CHECK(c.c_hat >= 0.0);
      CHECK(c.kappa > 0.0);
      positive = positive || c.c_hat > 0.0;
    }
    CHECK(positive);
    CHECK(r.reference_mode == "ghost");
  }
}

TEST_CASE("reference-geometry deviation is dominated by kappa times the synchronized one") {
  const auto f = fixture(3, 12);
  const auto spec = spec_of(ScheduleKind::AdaptiveDiagonal, f.traj);
  const auto ref = schedule::ReferenceSpec::ghost(ghost_of(f));
  const auto sync = proxies::run_algorithm1(f.problem, f.traj, spec, ref, options(f.traj, DeviationMode::Dev));
  const auto inref = proxies::run_algorithm1(f.problem, f.traj, spec, ref, options(f.traj, DeviationMode::DevRef));
  for (std::size_t i = 0; i < sync.checkpoints.size(); ++i) {
    const auto& s = sync.checkpoints[i];
    CHECK(inref.checkpoints[i].v_hat <= s.kappa * s.v_hat * (1 + 1e-12) + 1e-15);
  }
}

TEST_CASE("missing evaluation data drops Gamma and R and says so") {
  const auto f = fixture(3, 8, 0);
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, f.traj);
  const auto r = proxies::run_algorithm1(f.problem, f.traj, spec, schedule::ReferenceSpec::synchronized_deterministic(spec),
                                         options(f.traj));
  for (const auto& c : r.checkpoints) CHECK_FALSE(c.gamma_hat.has_value());
  CHECK_FALSE(r.r_hat.has_value());
  CHECK_FALSE(r.delta_eval.has_value());
  CHECK(r.notes.size() >= 2);
  double b = 0;
  for (const auto& c : r.checkpoints) b += 2 * c.eta * c.eta * c.v_hat;
  CHECK(r.b_hat == doctest::Approx(b));
}

TEST_CASE("fluctuation modes need recorded subbatches") {
  auto p = testsupport::quadratic_problem(2);
  const auto traj = train::run_sgd(p, testsupport::sgd(6, 8, 0.1, 3, 0));
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, traj);
  CHECK_THROWS_AS(proxies::run_algorithm1(p, traj, spec, schedule::ReferenceSpec::synchronized_deterministic(spec),
                                          options(traj, DeviationMode::Fluc)),
                  ConfigError);
}

TEST_CASE("checkpoint subsets and validation") {
  const auto f = fixture(2, 12);
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, f.traj);
  auto opts = options(f.traj);
  opts.checkpoints = {10, 1, 5};
  const auto r = proxies::run_algorithm1(f.problem, f.traj, spec, schedule::ReferenceSpec::synchronized_deterministic(spec),
                                         opts);
  REQUIRE(r.checkpoints.size() == 3);
  CHECK(r.checkpoints[0].t == 1);
  CHECK(r.checkpoints[2].t == 10);
  std::ostringstream os;
  proxies::write_csv(r, os, {{"k", "v"}});
  const std::string csv = os.str();
  CHECK(csv.rfind("# k: v\nt,V_hat,V_mode,Gamma_hat,C_hat,tr_sigma_t,tr_sigma_1t,eta\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  opts.checkpoints = {1, 1};
  CHECK_THROWS_AS(opts.validate(12), InputError);
  opts.checkpoints = {12};
  CHECK_THROWS_AS(opts.validate(12), InputError);
  opts.checkpoints = {};
  const auto empty = proxies::run_algorithm1(f.problem, f.traj, spec,
                                             schedule::ReferenceSpec::synchronized_deterministic(spec), opts);
  CHECK(empty.b_hat == doctest::Approx(*empty.r_hat));
}

TEST_CASE("common random numbers can be turned off") {
  const auto f = fixture(3, 8);
  const auto spec = spec_of(ScheduleKind::FixedIsotropic, f.traj);
  auto opts = options(f.traj);
  const auto ref = schedule::ReferenceSpec::synchronized_deterministic(spec);
  const auto crn = proxies::run_algorithm1(f.problem, f.traj, spec, ref, opts);
  opts.common_random_numbers = false;
  const auto ind = proxies::run_algorithm1(f.problem, f.traj, spec, ref, opts);
  CHECK(crn.delta_train.mean == ind.delta_train.mean);
  CHECK(crn.delta_eval->mean != ind.delta_eval->mean);
}

TEST_CASE("virtual-prefix statistics run with a prefix-observable reference") {
  const auto f = fixture(3, 10);
  auto spec = spec_of(ScheduleKind::AdaptiveScalar, f.traj);
  spec.stat = schedule::kVirtualStepSqEma;
  const auto r = proxies::run_algorithm1(f.problem, f.traj, spec, schedule::ReferenceSpec::prefix_observable(spec),
                                         options(f.traj));
  for (const auto& c : r.checkpoints) CHECK(c.c_hat == 0.0);
  // the virtual path depends on the proxy seed
  auto o2 = options(f.traj);
  o2.seed = 18;
  const auto r2 = proxies::run_algorithm1(f.problem, f.traj, spec, schedule::ReferenceSpec::prefix_observable(spec), o2);
  CHECK(r.checkpoints.back().tr_sigma_t != r2.checkpoints.back().tr_sigma_t);
}
