#include "vperturb/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vperturb/errors.hpp"
#include "vperturb/gauss/gaussian.hpp"
#include "vperturb/gauss/random.hpp"
#include "vperturb/schedule/history.hpp"

namespace vperturb::verify {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)

double logsumexp(const std::vector<double>& xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

double kl_term(double lp, double lq) {
  const double p = std::exp(lp);
  if (p == 0.0) return 0.0;
  if (!(lq > -std::numeric_limits<double>::infinity())) {
    if (p > 1e-300) throw DomainError("kl_numeric: reference density vanishes where p > 0");
    return 0.0;
  }
  return p * (lp - lq);
}

}  // namespace

void Grid1D::validate() const {
  if (points < 3) throw InputError("grid needs at least 3 points");
  if (!(upper > lower)) throw InputError("grid needs upper > lower");
}

double normal_logpdf(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + z * z / var);
}

double mixture_logpdf(double x, const std::vector<double>& means, const std::vector<double>& weights, double var) {
  std::vector<double> terms;
  terms.reserve(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (weights[i] > 0.0) terms.push_back(std::log(weights[i]) + normal_logpdf(x, means[i], var));
  }
  return logsumexp(terms);
}

double normal_logpdf_2d(double x, double y, const Vector& mean, const Matrix& cov) {
  const double a = cov(0, 0), b = cov(0, 1), c = cov(1, 1);
  const double det = a * c - b * b;
  if (!(det > 0.0) || !(a > 0.0)) throw DomainError("2-D covariance not positive definite");
  const double dx = x - mean[0], dy = y - mean[1];
  const double q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
  return -0.5 * (2.0 * kLog2Pi + std::log(det) + q);
}

Grid1D covering_grid(const std::vector<double>& means, double max_var, std::size_t points, double sds) {
  if (means.empty()) throw InputError("covering_grid needs at least one mean");
  if (!(max_var > 0.0)) throw DomainError("covering_grid needs a positive variance");
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  const double half = sds * std::sqrt(max_var);
  return Grid1D{*lo - half, *hi + half, points};
}

Grid2D covering_grid_2d(const std::vector<Vector>& means, const std::vector<Matrix>& covs, std::size_t points,
                        double sds) {
  if (means.empty() || covs.empty()) throw InputError("covering_grid_2d needs means and covariances");
  double sx = 0.0, sy = 0.0;
  for (const auto& c : covs) {
    sx = std::max(sx, c(0, 0));
    sy = std::max(sy, c(1, 1));
  }
  std::vector<double> xs, ys;
  for (const auto& m : means) {
    xs.push_back(m[0]);
    ys.push_back(m[1]);
  }
  return Grid2D{covering_grid(xs, sx, points, sds), covering_grid(ys, sy, points, sds)};
}

double integrate_density(const LogDensity1D& logp, const Grid1D& grid) {
  grid.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.points; ++i) s += grid.weight(i) * std::exp(logp(grid.node(i)));
  return s;
}

double integrate_density(const LogDensity2D& logp, const Grid2D& grid) {
  grid.x.validate();
  grid.y.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.x.points; ++i) {
    const double x = grid.x.node(i);
    double row = 0.0;
    for (std::size_t j = 0; j < grid.y.points; ++j) row += grid.y.weight(j) * std::exp(logp(x, grid.y.node(j)));
    s += grid.x.weight(i) * row;
  }
  return s;
}

double kl_numeric(const LogDensity1D& logp, const LogDensity1D& logq, const Grid1D& grid) {
  grid.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.points; ++i) {
    const double x = grid.node(i);
    s += grid.weight(i) * kl_term(logp(x), logq(x));
  }
  return s;
}

double kl_numeric_2d(const LogDensity2D& logp, const LogDensity2D& logq, const Grid2D& grid) {
  grid.x.validate();
  grid.y.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.x.points; ++i) {
    const double x = grid.x.node(i);
    double row = 0.0;
    for (std::size_t j = 0; j < grid.y.points; ++j) {
      const double y = grid.y.node(j);
      row += grid.y.weight(j) * kl_term(logp(x, y), logq(x, y));
    }
    s += grid.x.weight(i) * row;
  }
  return s;
}

namespace {

void check_probs(const std::vector<double>& probs) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InputError("probabilities must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InputError("probabilities must sum to 1");
}

void check_coverage(const Grid1D& grid, const std::vector<double>& means, double var) {
  const double reach = 8.0 * std::sqrt(var);
  for (double m : means) {
    if (m - reach < grid.lower || m + reach > grid.upper) {
      throw DomainError("grid does not cover 8 standard deviations of every component");
    }
  }
}

}  // namespace

InequalityCheck mixture_smoothing_check(const std::vector<CoupledAtom>& coupling, double sigma_sq,
                                        std::size_t points) {
  if (coupling.empty() || coupling.size() > 16) throw InputError("coupling needs 1..16 atoms");
  if (!(sigma_sq > 0.0)) throw DomainError("sigma^2 must be positive");
  std::vector<double> xs, ys, ps;
  double rhs = 0.0;
  for (const auto& a : coupling) {
    xs.push_back(a.x);
    ys.push_back(a.y);
    ps.push_back(a.prob);
    rhs += a.prob * (a.x - a.y) * (a.x - a.y);
  }
  check_probs(ps);
  rhs /= 2.0 * sigma_sq;
  std::vector<double> all = xs;
  all.insert(all.end(), ys.begin(), ys.end());
  const Grid1D grid = covering_grid(all, sigma_sq, points);
  check_coverage(grid, all, sigma_sq);
  const double lhs = kl_numeric([&](double x) { return mixture_logpdf(x, xs, ps, sigma_sq); },
                                [&](double x) { return mixture_logpdf(x, ys, ps, sigma_sq); }, grid);
  return {lhs, rhs};
}

InequalityCheck mismatch_inequality_check(const std::vector<double>& atoms, const std::vector<double>& probs, double m,
                                     double sigma_sq, double sigma_ref_sq, std::size_t points) {
  if (atoms.empty() || atoms.size() != probs.size()) throw InputError("atoms and probabilities must match");
  if (!(sigma_sq > 0.0) || !(sigma_ref_sq > 0.0)) throw DomainError("variances must be positive");
  check_probs(probs);
  double rhs = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) rhs += probs[i] * (atoms[i] - m) * (atoms[i] - m);
  rhs /= 2.0 * sigma_ref_sq;
  rhs += gauss::cov_compare_cost(Covariance::isotropic(1, sigma_sq), Covariance::isotropic(1, sigma_ref_sq));
  std::vector<double> all = atoms;
  all.push_back(m);
  const double var = std::max(sigma_sq, sigma_ref_sq);
  const Grid1D grid = covering_grid(all, var, points);
  check_coverage(grid, all, var);
  const double lhs = kl_numeric([&](double x) { return mixture_logpdf(x, atoms, probs, sigma_sq); },
                                [&](double x) { return normal_logpdf(x, m, sigma_ref_sq); }, grid);
  return {lhs, rhs};
}

void ToyChainSpec::validate() const {
  if (eta.empty() || eta.size() != sigma.size()) throw InputError("toy chain needs matching eta and sigma lists");
  for (double s : sigma) {
    if (!(s > 0.0)) throw DomainError("toy chain noise scales must be positive");
  }
  for (double e : eta) {
    if (!std::isfinite(e)) throw InputError("toy chain step sizes must be finite");
  }
}

ToyChainResult toy_chain_mi(const ToyChainSpec& spec, std::size_t points) {
  spec.validate();
  // W_T | s ~ N(s * mu, v).
  double mu = 0.0, v = 0.0;
  ToyChainResult out;
  for (std::size_t t = 0; t < spec.eta.size(); ++t) {
    const double contraction = 1.0 - spec.eta[t] * spec.a;
    mu = contraction * mu - spec.eta[t];
    v = contraction * contraction * v + spec.sigma[t] * spec.sigma[t];
    out.chain_bound += spec.eta[t] * spec.eta[t] / (2.0 * spec.sigma[t] * spec.sigma[t]);
  }
  const std::vector<double> means{mu, -mu};
  const std::vector<double> half{0.5, 0.5};
  const Grid1D grid = covering_grid(means, v, points);
  auto mix = [&](double x) { return mixture_logpdf(x, means, half, v); };
  for (double m : means) {
    out.exact_mi += 0.5 * kl_numeric([&](double x) { return normal_logpdf(x, m, v); }, mix, grid);
  }
  return out;
}

AccumulatedCovCheck accumulated_cov_check(const train::Trajectory& traj, const schedule::ScheduleSpec& spec,
                                          std::size_t t, std::size_t replications, std::uint64_t seed) {
  if (replications < 100) throw InputError("accumulated_cov_check needs at least 100 replications");
  if (t < 1 || t > traj.horizon()) throw InputError("step outside 1..T");
  if (spec.kind == schedule::ScheduleKind::AdaptiveScalar && spec.stat == schedule::kVirtualStepSqEma) {
    throw InputError("accumulated_cov_check does not simulate virtual-prefix statistics");
  }
  schedule::Schedule sched(spec);
  std::vector<Covariance> sigmas;
  for (std::size_t k = 1; k < t; ++k) {
    const auto view = schedule::make_history_view(traj, k);
    sigmas.push_back(sched.next_covariance(view));
    sched.advance(sigmas.back(), traj.steps[k - 1].g);
  }
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const auto n = static_cast<Eigen::Index>(replications);
  Matrix xi = Matrix::Zero(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    gauss::RandomStream rng(seed, gauss::stream_id({0xACCull, static_cast<std::uint64_t>(r)}));
    for (const auto& s : sigmas) xi.row(r) += s.sample(1, rng).row(0);
  }
  AccumulatedCovCheck out;
  out.replications = replications;
  out.target = sched.accumulated().materialize();
  const Eigen::RowVectorXd mean = xi.colwise().mean();
  const Matrix centered = xi.rowwise() - mean;
  out.empirical = centered.transpose() * centered / static_cast<double>(n - 1);
  out.se = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const Vector prod = centered.col(i).cwiseProduct(centered.col(j));
      const double m = prod.mean();
      const double var = (prod.array() - m).square().sum() / static_cast<double>(n - 1);
      out.se(i, j) = std::sqrt(var / static_cast<double>(n));
    }
  }
  return out;
}

double third_moment_oracle_1d(double sigma) {
  return 2.0 * std::sqrt(2.0 / std::numbers::pi) * sigma * sigma * sigma;
}

std::pair<double, double> third_moment_mc(const Covariance& cov, std::size_t draws, std::uint64_t seed) {
  if (draws < 2) throw InputError("third_moment_mc needs at least 2 draws");
  gauss::RandomStream rng(seed, gauss::stream_id({0x3A3ull}));
  const Matrix z = cov.sample(draws, rng);
  const Vector norms = z.rowwise().norm();
  const Eigen::ArrayXd cubes = norms.array().cube();
  const double mean = cubes.mean();
  const double var = (cubes - mean).square().sum() / static_cast<double>(draws - 1);
  return {mean, std::sqrt(var / static_cast<double>(draws))};
}

double quadratic_delta_oracle(const Matrix& a, const Matrix& sigma) {
  if (a.rows() != sigma.rows() || a.cols() != sigma.cols()) throw InputError("dimension mismatch");
  return -0.5 * (a * sigma).trace();
}

SentinelResult predictability_sentinel(const train::Trajectory& traj, const schedule::ScheduleSpec& spec) {
  const auto reference = schedule::replay_covariances(spec, traj);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SentinelResult res;
  for (std::size_t t = 1; t < traj.horizon(); ++t) {
    train::Trajectory bad = traj;
    for (std::size_t k = t - 1; k < bad.steps.size(); ++k) {
      auto& rec = bad.steps[k];
      if (k > t - 1) rec.w.setConstant(nan);
      rec.g.setConstant(nan);
      for (auto& g : rec.g_sub) g.setConstant(nan);
      for (auto& b : rec.batch) b = ~b;
      rec.eta = nan;
      rec.loss_train = nan;
      rec.loss_eval = nan;
    }
    schedule::Schedule sched(spec);
    Covariance sigma = Covariance::zero(spec.dim);
    for (std::size_t k = 1; k <= t; ++k) {
      const auto view = schedule::make_history_view(bad, k);
      sigma = sched.next_covariance(view);
      if (k < t) sched.advance(sigma, bad.steps[k - 1].g);
    }
    const bool finite = std::isfinite(sigma.trace()) && sigma.materialize().allFinite();
    if (!finite || !(sigma == reference[t - 1])) {
      res.passed = false;
      res.failures.push_back(schedule::to_string(spec.kind) + ": Sigma_" + std::to_string(t) +
                             (finite ? " changed" : " not finite") + " after corrupting step " + std::to_string(t));
    }
  }
  return res;
}

InequalityCheck conditioning_compression_check(const std::vector<double>& p, const std::vector<double>& q,
                                               const std::vector<std::size_t>& coarse_map) {
  if (p.size() != q.size() || p.size() != coarse_map.size() || p.empty()) {
    throw InputError("pmfs and coarsening map must have equal nonzero length");
  }
  check_probs(p);
  check_probs(q);
  const std::size_t cells = *std::max_element(coarse_map.begin(), coarse_map.end()) + 1;
  std::vector<double> pc(cells, 0.0), qc(cells, 0.0);
  auto kl = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0) continue;
      if (b[i] == 0.0) throw DomainError("reference pmf vanishes where p > 0");
      s += a[i] * std::log(a[i] / b[i]);
    }
    return s;
  };
  for (std::size_t i = 0; i < p.size(); ++i) {
    pc[coarse_map[i]] += p[i];
    qc[coarse_map[i]] += q[i];
  }
  return {kl(pc, qc), kl(p, q)};
}

}  // namespace vperturb::verify
