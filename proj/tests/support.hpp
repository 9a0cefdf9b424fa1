#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "vperturb/gauss/covariance.hpp"
#include "vperturb/gauss/random.hpp"
#include "vperturb/train/problem.hpp"
#include "vperturb/train/sgd.hpp"

namespace testsupport {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using vperturb::gauss::Covariance;
using vperturb::gauss::RandomStream;

inline MatrixXd random_spd(int d, RandomStream& rng, double floor = 0.2) {
  MatrixXd b(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) b(i, j) = rng.normal();
  return b * b.transpose() / d + floor * MatrixXd::Identity(d, d);
}

inline VectorXd random_vector(int d, RandomStream& rng, double scale = 1.0) {
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * rng.normal();
  return v;
}

inline VectorXd random_positive(int d, RandomStream& rng, double lo = 0.2, double hi = 2.0) {
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = lo + (hi - lo) * rng.uniform();
  return v;
}

// One covariance of each structure, all of dimension d.
inline std::vector<Covariance> one_of_each(int d, RandomStream& rng) {
  MatrixXd u(d, 2);
  for (int i = 0; i < d; ++i) {
    u(i, 0) = rng.normal();
    u(i, 1) = rng.normal();
  }
  return {Covariance::isotropic(d, 0.3 + rng.uniform()), Covariance::diagonal(random_positive(d, rng)),
          Covariance::dense(random_spd(d, rng)),
          Covariance::low_rank_ridge(0.4, u, random_positive(2, rng, 0.1, 1.0))};
}

// Dense closed-form Gaussian KL, written directly from the density ratio.
inline double kl_dense(const VectorXd& mp, const MatrixXd& sp, const VectorXd& mq, const MatrixXd& sq) {
  const Eigen::FullPivLU<MatrixXd> lu(sq);
  const VectorXd dm = mq - mp;
  const double quad = dm.dot(lu.solve(dm));
  const double tr = lu.solve(sp).trace();
  const double ld = std::log(sq.determinant()) - std::log(sp.determinant());
  return 0.5 * (quad + tr - static_cast<double>(mp.size()) + ld);
}

inline vperturb::train::Problem quadratic_problem(std::size_t d, std::size_t n_train = 64, std::size_t n_eval = 128,
                                                  std::uint64_t seed = 7) {
  vperturb::train::ModelSpec m;
  m.kind = vperturb::train::ModelKind::Quadratic;
  m.dim = d;
  vperturb::train::DatasetSpec ds;
  ds.n_train = n_train;
  ds.n_eval = n_eval;
  ds.task_seed = seed;
  ds.seed = seed + 1;
  ds.eval_seed = seed + 2;
  return vperturb::train::make_problem(m, ds);
}

inline vperturb::train::SgdConfig sgd(std::size_t horizon, std::size_t batch = 8, double eta = 0.1,
                                      std::uint64_t seed = 3, std::size_t subbatches = 2) {
  vperturb::train::SgdConfig c;
  c.horizon = horizon;
  c.batch = batch;
  c.eta.eta0 = eta;
  c.seed = seed;
  c.subbatches = subbatches;
  return c;
}

}  // namespace testsupport
