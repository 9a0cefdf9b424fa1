#include <doctest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "vperturb/errors.hpp"
#include "vperturb/gauss/gaussian.hpp"

using namespace vperturb;
using gauss::Covariance;
using gauss::RandomStream;
using testsupport::MatrixXd;
using testsupport::VectorXd;

TEST_CASE("random stream draws are a pure function of seed, id and counter") {
  RandomStream a(11, 4);
  RandomStream b(11, 4);
  for (std::uint64_t n = 0; n < 64; ++n) {
    const auto x = a();
    CHECK(x == b.at(n));
    CHECK(x == b());
  }
  RandomStream c(11, 5);
  RandomStream d(12, 4);
  CHECK(RandomStream(11, 4).at(0) != c.at(0));
  CHECK(RandomStream(11, 4).at(0) != d.at(0));
  // restarting at a counter reproduces the tail
  RandomStream e(11, 4, 10);
  CHECK(e() == RandomStream(11, 4).at(10));
}

TEST_CASE("stream ids depend on order of their parts") {
  CHECK(gauss::stream_id({1, 2}) != gauss::stream_id({2, 1}));
  CHECK(gauss::stream_id({1, 2}) == gauss::stream_id({1, 2}));
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 1000; ++t) seen.insert(gauss::stream_id({7, t}));
  CHECK(seen.size() == 1000);
}

TEST_CASE("uniform and normal draws have the right first two moments") {
  RandomStream rng(3, 9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
}

TEST_CASE("covariance algebra agrees with dense linear algebra for every representation") {
  RandomStream rng(21, 1);
  for (int d : {1, 3, 6}) {
    for (const auto& cov : testsupport::one_of_each(d, rng)) {
      CAPTURE(cov.kind_name());
      const MatrixXd m = cov.materialize();
      REQUIRE(m.rows() == d);
      CHECK((m - m.transpose()).norm() < 1e-12);
      CHECK(cov.trace() == doctest::Approx(m.trace()).epsilon(1e-12));
      CHECK(cov.logdet() == doctest::Approx(std::log(m.determinant())).epsilon(1e-10));
      const VectorXd x = testsupport::random_vector(d, rng);
      CHECK((cov.apply(x) - m * x).norm() < 1e-10 * (1 + x.norm()));
      CHECK((cov.solve(x) - m.fullPivLu().solve(x)).norm() < 1e-9 * (1 + x.norm()));
      CHECK(gauss::mahalanobis_sq(x, cov) == doctest::Approx(x.dot(m.fullPivLu().solve(x))).epsilon(1e-10));
      CHECK((cov.diagonal_entries() - m.diagonal()).norm() < 1e-12);
      const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().minCoeff();
      CHECK(cov.min_eigenvalue_bound() <= lmin + 1e-12);
      CHECK((cov.scaled(2.5).materialize() - 2.5 * m).norm() < 1e-10);
    }
  }
}

TEST_CASE("sampled rows have the requested covariance") {
  RandomStream pick(5, 5);
  const int d = 3;
  for (const auto& cov : testsupport::one_of_each(d, pick)) {
    CAPTURE(cov.kind_name());
    RandomStream rng(77, 2);
    const std::size_t n = 100000;
    const MatrixXd z = cov.sample(n, rng);
    REQUIRE(z.rows() == static_cast<Eigen::Index>(n));
    const MatrixXd emp = z.transpose() * z / static_cast<double>(n);
    const MatrixXd m = cov.materialize();
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        // var of z_i z_j is m_ii m_jj + m_ij^2
        const double se = std::sqrt((m(i, i) * m(j, j) + m(i, j) * m(i, j)) / static_cast<double>(n));
        CHECK(std::abs(emp(i, j) - m(i, j)) < 5 * se);
      }
    }
  }
}

TEST_CASE("sampling is reproducible from the stream") {
  RandomStream pick(8, 8);
  for (const auto& cov : testsupport::one_of_each(4, pick)) {
    RandomStream a(1, 2), b(1, 2);
    CHECK(cov.sample(10, a) == cov.sample(10, b));
  }
}

TEST_CASE("add promotes representations and sums matrices") {
  RandomStream rng(31, 3);
  const int d = 4;
  const auto all = testsupport::one_of_each(d, rng);
  for (const auto& a : all) {
    for (const auto& b : all) {
      const Covariance s = gauss::add(a, b);
      CHECK((s.materialize() - (a.materialize() + b.materialize())).norm() < 1e-10);
    }
  }
  using K = Covariance::Kind;
  const auto& iso = all[0];
  const auto& diag = all[1];
  const auto& dense = all[2];
  const auto& lr = all[3];
  CHECK(gauss::add(iso, iso).kind() == K::Isotropic);
  CHECK(gauss::add(iso, diag).kind() == K::Diagonal);
  CHECK(gauss::add(diag, diag).kind() == K::Diagonal);
  CHECK(gauss::add(dense, iso).kind() == K::Dense);
  CHECK(gauss::add(lr, iso).kind() == K::LowRankRidge);
  CHECK(gauss::add(lr, lr).kind() == K::LowRankRidge);
  CHECK(gauss::add(lr, diag).kind() == K::Dense);
  const auto z = Covariance::zero(d);
  CHECK(z.is_zero());
  for (const auto& a : all) CHECK(gauss::add(z, a) == a);
  CHECK(z.trace() == 0.0);
}

TEST_CASE("invalid covariances are rejected") {
  CHECK_THROWS(Covariance::isotropic(3, -1.0));
  CHECK_THROWS(Covariance::isotropic(0, 1.0));
  CHECK_THROWS(Covariance::diagonal(VectorXd::Constant(2, 0.0)));
  MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;  // indefinite
  CHECK_THROWS_AS(Covariance::dense(bad), DomainError);
  MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(Covariance::dense(asym), DomainError);
  CHECK_THROWS_AS(Covariance::zero(3).solve(VectorXd(VectorXd::Ones(3))), DomainError);
  CHECK_THROWS(Covariance::low_rank_ridge(0.1, MatrixXd::Ones(3, 2), VectorXd::Ones(1)));
}

TEST_CASE("gaussian_kl matches the dense closed form") {
  RandomStream rng(41, 4);
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 1 + rep % 6;
    const auto ps = testsupport::one_of_each(d, rng);
    const auto qs = testsupport::one_of_each(d, rng);
    for (const auto& p : ps) {
      for (const auto& q : qs) {
        const VectorXd mp = testsupport::random_vector(d, rng);
        const VectorXd mq = testsupport::random_vector(d, rng);
        const double got = gauss::gaussian_kl({mp, p}, {mq, q});
        const double want = testsupport::kl_dense(mp, p.materialize(), mq, q.materialize());
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
        CHECK(got >= -1e-12);
      }
    }
  }
}

TEST_CASE("covariance comparison cost vanishes on equal arguments and is exact for doubling") {
  RandomStream rng(51, 5);
  for (int d = 1; d <= 10; ++d) {
    for (const auto& s : testsupport::one_of_each(d, rng)) {
      CAPTURE(d);
      CAPTURE(s.kind_name());
      CHECK(std::abs(gauss::cov_compare_cost(s, s)) <= 1e-12);
      const double want = 0.5 * d * (1.0 - std::log(2.0));
      CHECK(std::abs(gauss::cov_compare_cost(s.scaled(2.0), s) - want) <= 1e-12);
    }
  }
}

TEST_CASE("trace_of_solve agrees with the dense trace") {
  RandomStream rng(61, 6);
  const auto a = testsupport::one_of_each(5, rng);
  for (const auto& ref : a) {
    for (const auto& act : a) {
      const double want = ref.materialize().fullPivLu().solve(act.materialize()).trace();
      CHECK(gauss::trace_of_solve(ref, act) == doctest::Approx(want).epsilon(1e-9));
    }
  }
}

TEST_CASE("comparability kappa is the tight Loewner constant") {
  RandomStream rng(71, 7);
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = testsupport::one_of_each(4, rng);
    const auto b = testsupport::one_of_each(4, rng);
    for (const auto& sigma : a) {
      for (const auto& ref : b) {
        const double kappa = gauss::comparability_kappa(sigma, ref);
        const MatrixXd si = sigma.materialize().inverse();
        const MatrixXd ri = ref.materialize().inverse();
        const MatrixXd gap = kappa * si - ri;
        const auto ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (gap + gap.transpose())).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-8 * kappa * si.norm());
        // no smaller constant works
        const MatrixXd gap2 = 0.999 * kappa * si - ri;
        CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (gap2 + gap2.transpose())).eigenvalues().minCoeff() < 0);
      }
    }
  }
  const auto s = Covariance::isotropic(3, 0.5);
  CHECK(gauss::comparability_kappa(s, s) == doctest::Approx(1.0));
}

TEST_CASE("third-moment bound dominates the exact one-dimensional moment") {
  for (double sigma : {0.1, 1.0, 3.0}) {
    const double exact = 2.0 * std::sqrt(2.0 / M_PI) * sigma * sigma * sigma;
    CHECK(gauss::third_moment_bound(Covariance::isotropic(1, sigma * sigma)) >= exact);
    CHECK(gauss::third_moment_bound(Covariance::isotropic(1, sigma * sigma)) ==
          doctest::Approx(std::sqrt(3.0) * sigma * sigma * sigma));
  }
}
