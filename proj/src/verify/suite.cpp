#include "vperturb/verify/suite.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "vperturb/gauss/gaussian.hpp"
#include "vperturb/gauss/random.hpp"
#include "vperturb/proxies/proxies.hpp"
#include "vperturb/schedule/schedule.hpp"
#include "vperturb/train/problem.hpp"
#include "vperturb/train/sgd.hpp"
#include "vperturb/verify/oracles.hpp"

namespace vperturb::verify {

using gauss::GaussianMoments;
using gauss::RandomStream;
using gauss::stream_id;

namespace {

constexpr double kGridTol = 1e-6;

double uniform_in(RandomStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

CheckResult make_result(std::string name, double margin, std::string detail) {
  CheckResult r;
  r.name = std::move(name);
  r.margin = margin;
  r.passed = margin >= 0.0;
  r.detail = std::move(detail);
  return r;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Matrix random_spd(RandomStream& rng, Eigen::Index d, double lo, double hi) {
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  Vector ev(d);
  for (Eigen::Index i = 0; i < d; ++i) ev[i] = uniform_in(rng, lo, hi);
  return q * ev.asDiagonal() * q.transpose();
}

CheckResult kl_grid_1d(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 1}));
  double worst = 0.0;
  for (std::size_t k = 0; k < o.sweep; ++k) {
    const double mp = uniform_in(rng, -2, 2), mq = uniform_in(rng, -2, 2);
    const double vp = uniform_in(rng, 0.3, 3), vq = uniform_in(rng, 0.3, 3);
    const double closed = gauss::gaussian_kl(GaussianMoments(Vector::Constant(1, mp), Covariance::isotropic(1, vp)),
                                             GaussianMoments(Vector::Constant(1, mq), Covariance::isotropic(1, vq)));
    const Grid1D grid = covering_grid({mp, mq}, std::max(vp, vq));
    const double numeric =
        kl_numeric([&](double x) { return normal_logpdf(x, mp, vp); }, [&](double x) { return normal_logpdf(x, mq, vq); },
                   grid);
    worst = std::max(worst, std::abs(closed - numeric));
  }
  return make_result("gaussian_kl_grid_1d", kGridTol - worst, "max |closed - grid| = " + fmt(worst));
}

CheckResult kl_grid_2d(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 2}));
  double worst = 0.0;
  const std::size_t count = std::max<std::size_t>(1, o.sweep / 10);
  for (std::size_t k = 0; k < count; ++k) {
    Vector mp(2), mq(2);
    mp << uniform_in(rng, -1, 1), uniform_in(rng, -1, 1);
    mq << uniform_in(rng, -1, 1), uniform_in(rng, -1, 1);
    const Matrix sp = random_spd(rng, 2, 0.5, 2.0), sq = random_spd(rng, 2, 0.5, 2.0);
    const double closed = gauss::gaussian_kl(GaussianMoments(mp, Covariance::dense(sp)),
                                             GaussianMoments(mq, Covariance::dense(sq)));
    const Grid2D grid = covering_grid_2d({mp, mq}, {sp, sq});
    const double numeric = kl_numeric_2d([&](double x, double y) { return normal_logpdf_2d(x, y, mp, sp); },
                                         [&](double x, double y) { return normal_logpdf_2d(x, y, mq, sq); }, grid);
    worst = std::max(worst, std::abs(closed - numeric));
  }
  return make_result("gaussian_kl_grid_2d", kGridTol - worst, "max |closed - grid| = " + fmt(worst));
}

CheckResult smoothing_sweep(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 3}));
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < o.sweep; ++k) {
    const double p = uniform_in(rng, 0.05, 0.95);
    std::vector<CoupledAtom> c{{uniform_in(rng, -2, 2), uniform_in(rng, -2, 2), p},
                               {uniform_in(rng, -2, 2), uniform_in(rng, -2, 2), 1.0 - p}};
    const auto r = mixture_smoothing_check(c, uniform_in(rng, 0.2, 2.0));
    worst = std::min(worst, r.slack());
  }
  const auto point = mixture_smoothing_check({{0.0, 1.0, 1.0}}, 1.0);
  const double eq_err = std::max(std::abs(point.lhs - 0.5), std::abs(point.rhs - 0.5));
  return make_result("mixture_smoothing", std::min(worst + kGridTol, kGridTol - eq_err),
                     "min slack = " + fmt(worst) + ", point-mass lhs = " + fmt(point.lhs));
}

CheckResult mismatch_sweep(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 4}));
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < o.sweep; ++k) {
    const double p = uniform_in(rng, 0.05, 0.95);
    const auto r = mismatch_inequality_check({uniform_in(rng, -2, 2), uniform_in(rng, -2, 2)}, {p, 1.0 - p},
                                        uniform_in(rng, -1, 1), uniform_in(rng, 0.2, 2.0), uniform_in(rng, 0.2, 2.0));
    worst = std::min(worst, r.slack());
  }
  return make_result("reference_mismatch", worst + kGridTol, "min slack = " + fmt(worst));
}

CheckResult toy_chain(const SuiteOptions&) {
  const auto base = toy_chain_mi(ToyChainSpec{{1.0}, {1.0}, 0.0});
  const auto zero = toy_chain_mi(ToyChainSpec{{0.0}, {1.0}, 0.0});
  double margin = std::min({base.chain_bound - base.exact_mi, std::log(2.0) - base.exact_mi,
                            1e-8 - std::abs(zero.exact_mi), std::abs(base.chain_bound - 0.5) < 1e-15 ? 1.0 : -1.0});
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {0.5, 1.0, 2.0, 10.0}) {
    const double mi = toy_chain_mi(ToyChainSpec{{1.0}, {s}, 0.0}).exact_mi;
    margin = std::min(margin, prev - mi);
    prev = mi;
  }
  return make_result("toy_chain_mi", margin,
                     "exact MI = " + fmt(base.exact_mi) + " nats, chain bound = " + fmt(base.chain_bound));
}

CheckResult third_moment(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 5}));
  double margin = std::numeric_limits<double>::infinity();
  const std::size_t count = std::max<std::size_t>(1, o.sweep / 5);
  for (std::size_t k = 0; k < count; ++k) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    Vector diag(d);
    for (Eigen::Index i = 0; i < d; ++i) diag[i] = uniform_in(rng, 0.1, 2.0);
    const Covariance cov = Covariance::diagonal(diag);
    const auto [mean, se] = third_moment_mc(cov, 20000, o.seed + k);
    margin = std::min(margin, gauss::third_moment_bound(cov) + 3.0 * se - mean);
  }
  const auto [m1, se1] = third_moment_mc(Covariance::isotropic(1, 1.0), 200000, o.seed);
  margin = std::min(margin, 3.0 * se1 - std::abs(m1 - third_moment_oracle_1d(1.0)));
  return make_result("third_moment", margin, "1-D MC = " + fmt(m1) + " vs " + fmt(third_moment_oracle_1d(1.0)));
}

CheckResult quadratic_delta(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 6}));
  double margin = std::numeric_limits<double>::infinity();
  const std::size_t count = std::max<std::size_t>(1, o.sweep / 20);
  for (std::size_t k = 0; k < count; ++k) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    const Matrix a = random_spd(rng, d, 0.5, 2.0);
    const Matrix s = random_spd(rng, d, 0.05, 0.5);
    train::QuadraticModel model(a);
    train::SampleSet data;
    data.inputs = Matrix::Zero(1, d);
    data.targets = Vector::Zero(1);
    Vector w(d);
    for (Eigen::Index i = 0; i < d; ++i) w[i] = rng.normal();
    RandomStream draws(o.seed, stream_id({0xC1, 6, k}));
    const auto est = proxies::output_sensitivity_proxy(model, w, Covariance::dense(s), data, 20000, draws);
    margin = std::min(margin, 3.0 * est.se - std::abs(est.mean - quadratic_delta_oracle(a, s)));
  }
  return make_result("quadratic_output_sensitivity", margin, "within 3 standard errors of -Tr(A Sigma)/2");
}

train::Problem small_problem(std::uint64_t seed) {
  train::ModelSpec ms;
  ms.dim = 3;
  train::DatasetSpec ds;
  ds.n_train = 64;
  ds.n_eval = 64;
  ds.task_seed = seed + 1;
  ds.seed = seed + 2;
  ds.eval_seed = seed + 3;
  return train::make_problem(ms, ds);
}

train::Trajectory small_run(const train::Problem& p, std::uint64_t seed) {
  train::SgdConfig c;
  c.horizon = 8;
  c.batch = 8;
  c.eta.eta0 = 0.2;
  c.seed = seed;
  c.w_init = {1.0, -1.0, 0.5};
  return train::run_sgd(p, c);
}

std::vector<schedule::ScheduleSpec> all_kinds(std::size_t dim, std::size_t horizon) {
  using schedule::ScheduleKind;
  std::vector<schedule::ScheduleSpec> out;
  for (auto k : {ScheduleKind::FixedIsotropic, ScheduleKind::FixedDense, ScheduleKind::AdaptiveScalar,
                 ScheduleKind::AdaptiveDiagonal, ScheduleKind::AdamProportional, ScheduleKind::AdamInverse,
                 ScheduleKind::LowRankRidge}) {
    schedule::ScheduleSpec s;
    s.kind = k;
    s.dim = dim;
    s.horizon = horizon;
    if (k == ScheduleKind::FixedDense) {
      Matrix m = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)) * 0.02;
      m(0, 1) = m(1, 0) = 0.005;
      s.covariances = {Covariance::dense(m)};
    }
    out.push_back(s);
  }
  return out;
}

CheckResult accumulated(const SuiteOptions& o) {
  const auto p = small_problem(o.seed);
  const auto traj = small_run(p, o.seed);
  schedule::ScheduleSpec iso;
  iso.dim = 3;
  iso.horizon = traj.horizon();
  iso.sigma = 0.1;
  const auto r = accumulated_cov_check(traj, iso, 5, 10000, o.seed);
  const double target = r.target.trace();
  const double rel = std::abs(r.empirical.trace() - target) / target;
  double margin = 0.05 - rel;

  schedule::ScheduleSpec ad;
  ad.kind = schedule::ScheduleKind::AdaptiveScalar;
  ad.dim = 3;
  ad.horizon = traj.horizon();
  const auto r2 = accumulated_cov_check(traj, ad, 5, 10000, o.seed + 1);
  for (Eigen::Index i = 0; i < r2.target.rows(); ++i)
    for (Eigen::Index j = 0; j < r2.target.cols(); ++j)
      margin = std::min(margin, 4.0 * r2.se(i, j) - std::abs(r2.empirical(i, j) - r2.target(i, j)));
  return make_result("accumulated_covariance", margin,
                     "fixed isotropic trace error " + fmt(100.0 * rel) + "% (target " + fmt(target) + ")");
}

CheckResult sentinel(const SuiteOptions& o) {
  const auto p = small_problem(o.seed);
  const auto traj = small_run(p, o.seed);
  std::string detail = "all schedule kinds unchanged under step-t corruption";
  bool ok = true;
  for (const auto& spec : all_kinds(3, traj.horizon())) {
    const auto res = predictability_sentinel(traj, spec);
    if (!res.passed) {
      ok = false;
      detail = res.failures.front();
    }
  }
  return make_result("predictability_sentinel", ok ? 0.0 : -1.0, detail);
}

CheckResult compression(const SuiteOptions& o) {
  RandomStream rng(o.seed, stream_id({0xC1, 7}));
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < o.sweep; ++k) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<double> p(n), q(n);
    std::vector<std::size_t> f(n);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      q[i] = rng.uniform();
      f[i] = rng.below(n / 2 + 1);
      sp += p[i];
      sq += q[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    // Renormalize the last entry so the totals are exactly 1 within rounding.
    double rp = 1.0, rq = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      rp -= p[i];
      rq -= q[i];
    }
    p[n - 1] = rp;
    q[n - 1] = rq;
    if (rp <= 0.0 || rq <= 0.0) continue;
    worst = std::min(worst, conditioning_compression_check(p, q, f).slack());
  }
  return make_result("conditioning_compression", worst + 1e-12, "min slack = " + fmt(worst));
}

}  // namespace

std::vector<CheckResult> run_suite(const SuiteOptions& options) {
  return {kl_grid_1d(options),    kl_grid_2d(options),      smoothing_sweep(options), mismatch_sweep(options),
          toy_chain(options),     third_moment(options),    quadratic_delta(options), accumulated(options),
          sentinel(options),      compression(options)};
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

nlohmann::ordered_json to_json(const std::vector<CheckResult>& results) {
  nlohmann::ordered_json j;
  j["passed"] = all_passed(results);
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    checks.push_back({{"name", r.name}, {"passed", r.passed}, {"margin", r.margin}, {"detail", r.detail}});
  }
  j["checks"] = std::move(checks);
  return j;
}

}  // namespace vperturb::verify
