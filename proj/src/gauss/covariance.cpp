#include "vperturb/gauss/covariance.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "vperturb/errors.hpp"

namespace vperturb::gauss {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_finite_positive(double v, const char* what) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    throw DomainError(std::string(what) + " must be finite and positive");
  }
}

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw InputError(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

std::shared_ptr<const Eigen::LLT<Matrix>> checked_cholesky(const Matrix& m, const char* what) {
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(m);
  if (llt->info() != Eigen::Success) {
    throw DomainError(std::string(what) + ": matrix is not positive definite");
  }
  const Eigen::Index n = m.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pivot = llt->matrixLLT()(i, i);
    if (!(pivot * pivot > Covariance::kPivotTolerance)) {
      throw DomainError(std::string(what) + ": pivot below tolerance");
    }
  }
  return llt;
}

}  // namespace

Covariance Covariance::isotropic(std::size_t dim, double sigma_sq) {
  if (dim == 0) throw InputError("covariance dimension must be positive");
  require_finite_positive(sigma_sq, "isotropic variance");
  return Covariance(dim, Isotropic{sigma_sq});
}

Covariance Covariance::zero(std::size_t dim) {
  if (dim == 0) throw InputError("covariance dimension must be positive");
  return Covariance(dim, Isotropic{0.0});
}

Covariance Covariance::diagonal(Vector entries) {
  if (entries.size() == 0) throw InputError("covariance dimension must be positive");
  for (Eigen::Index i = 0; i < entries.size(); ++i) {
    require_finite_positive(entries[i], "diagonal variance");
  }
  const auto d = static_cast<std::size_t>(entries.size());
  return Covariance(d, Diagonal{std::move(entries)});
}

Covariance Covariance::dense(Matrix matrix) {
  if (matrix.rows() == 0 || matrix.rows() != matrix.cols()) {
    throw InputError("dense covariance must be square and nonempty");
  }
  if (!matrix.allFinite()) throw DomainError("dense covariance has non-finite entries");
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, matrix.cwiseAbs().maxCoeff())) {
    throw DomainError("dense covariance is not symmetric");
  }
  Matrix sym = 0.5 * (matrix + matrix.transpose());
  auto chol = checked_cholesky(sym, "dense covariance");
  const auto d = static_cast<std::size_t>(sym.rows());
  return Covariance(d, Dense{std::move(sym), std::move(chol)});
}

Covariance Covariance::low_rank_ridge(double lambda0, Matrix factors, Vector weights) {
  require_finite_positive(lambda0, "ridge lambda0");
  if (factors.rows() == 0) throw InputError("covariance dimension must be positive");
  if (factors.cols() != weights.size()) {
    throw InputError("low-rank factors and weights disagree on rank");
  }
  if (!factors.allFinite()) throw DomainError("low-rank factors have non-finite entries");
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    require_finite_positive(weights[i], "low-rank weight");
  }
  Matrix cap = factors.transpose() * factors / lambda0;
  cap.diagonal() += weights.cwiseInverse();
  auto llt = checked_cholesky(cap, "low-rank capacitance");
  const auto d = static_cast<std::size_t>(factors.rows());
  return Covariance(d, LowRankRidge{lambda0, std::move(factors), std::move(weights), std::move(llt)});
}

std::string_view Covariance::kind_name() const noexcept {
  switch (kind()) {
    case Kind::Isotropic: return "isotropic";
    case Kind::Diagonal: return "diagonal";
    case Kind::Dense: return "dense";
    case Kind::LowRankRidge: return "lowrank_ridge";
  }
  return "unknown";
}

bool Covariance::is_zero() const noexcept {
  const auto* iso = std::get_if<Isotropic>(&rep_);
  return iso && iso->sigma_sq == 0.0;
}

double Covariance::trace() const {
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) { return static_cast<double>(dim_) * c.sigma_sq; },
          [](const Diagonal& c) { return c.entries.sum(); },
          [](const Dense& c) { return c.matrix.trace(); },
          [&](const LowRankRidge& c) {
            return static_cast<double>(dim_) * c.lambda0 +
                   (c.factors.colwise().squaredNorm().transpose().cwiseProduct(c.weights)).sum();
          },
      },
      rep_);
}

double Covariance::logdet() const {
  if (is_zero()) throw DomainError("log-determinant of the zero covariance");
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) { return static_cast<double>(dim_) * std::log(c.sigma_sq); },
          [](const Diagonal& c) { return c.entries.array().log().sum(); },
          [](const Dense& c) {
            return 2.0 * c.chol->matrixLLT().diagonal().array().log().sum();
          },
          [&](const LowRankRidge& c) {
            // det(lambda I + U D U^T) = lambda^d det(D) det(D^{-1} + U^T U / lambda)
            return static_cast<double>(dim_) * std::log(c.lambda0) + c.weights.array().log().sum() +
                   2.0 * c.capacitance->matrixLLT().diagonal().array().log().sum();
          },
      },
      rep_);
}

Matrix Covariance::solve(const Matrix& x) const {
  require_same_dim(static_cast<std::size_t>(x.rows()), dim_, "solve");
  if (is_zero()) throw DomainError("solve against the zero covariance");
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) -> Matrix { return x / c.sigma_sq; },
          [&](const Diagonal& c) -> Matrix { return c.entries.cwiseInverse().asDiagonal() * x; },
          [&](const Dense& c) -> Matrix { return c.chol->solve(x); },
          [&](const LowRankRidge& c) -> Matrix {
            // (lI + UDU^T)^{-1} = I/l - U K^{-1} U^T / l^2,  K = D^{-1} + U^T U / l
            const double l = c.lambda0;
            if (c.factors.cols() == 0) return x / l;
            Matrix inner = c.capacitance->solve(c.factors.transpose() * x);
            return x / l - c.factors * inner / (l * l);
          },
      },
      rep_);
}

Vector Covariance::solve(const Vector& x) const {
  require_same_dim(static_cast<std::size_t>(x.size()), dim_, "solve");
  if (is_zero()) throw DomainError("solve against the zero covariance");
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) -> Vector { return x / c.sigma_sq; },
          [&](const Diagonal& c) -> Vector { return x.cwiseQuotient(c.entries); },
          [&](const Dense& c) -> Vector { return c.chol->solve(x); },
          [&](const LowRankRidge& c) -> Vector {
            const double l = c.lambda0;
            if (c.factors.cols() == 0) return x / l;
            Vector inner = c.capacitance->solve(c.factors.transpose() * x);
            return x / l - c.factors * inner / (l * l);
          },
      },
      rep_);
}

Vector Covariance::apply(const Vector& x) const {
  require_same_dim(static_cast<std::size_t>(x.size()), dim_, "apply");
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) -> Vector { return c.sigma_sq * x; },
          [&](const Diagonal& c) -> Vector { return c.entries.cwiseProduct(x); },
          [&](const Dense& c) -> Vector { return c.matrix * x; },
          [&](const LowRankRidge& c) -> Vector {
            return c.lambda0 * x + c.factors * c.weights.cwiseProduct(c.factors.transpose() * x);
          },
      },
      rep_);
}

Matrix Covariance::materialize() const {
  const auto d = static_cast<Eigen::Index>(dim_);
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) -> Matrix { return c.sigma_sq * Matrix::Identity(d, d); },
          [](const Diagonal& c) -> Matrix { return c.entries.asDiagonal(); },
          [](const Dense& c) -> Matrix { return c.matrix; },
          [&](const LowRankRidge& c) -> Matrix {
            Matrix m = c.factors * c.weights.asDiagonal() * c.factors.transpose();
            m.diagonal().array() += c.lambda0;
            return m;
          },
      },
      rep_);
}

Vector Covariance::diagonal_entries() const {
  const auto d = static_cast<Eigen::Index>(dim_);
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) -> Vector { return Vector::Constant(d, c.sigma_sq); },
          [](const Diagonal& c) -> Vector { return c.entries; },
          [](const Dense& c) -> Vector { return c.matrix.diagonal(); },
          [&](const LowRankRidge& c) -> Vector {
            Vector out = c.factors.array().square().matrix() * c.weights;
            out.array() += c.lambda0;
            return out;
          },
      },
      rep_);
}

double Covariance::min_eigenvalue_bound() const {
  return std::visit(
      Overloaded{
          [](const Isotropic& c) { return c.sigma_sq; },
          [](const Diagonal& c) { return c.entries.minCoeff(); },
          [](const Dense& c) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(c.matrix, Eigen::EigenvaluesOnly);
            return es.eigenvalues().minCoeff();
          },
          [](const LowRankRidge& c) { return c.lambda0; },
      },
      rep_);
}

Matrix Covariance::sample(std::size_t count, RandomStream& rng) const {
  if (count == 0) throw InputError("sample count must be positive");
  const auto d = static_cast<Eigen::Index>(dim_);
  const auto n = static_cast<Eigen::Index>(count);
  Matrix out(n, d);
  std::visit(
      Overloaded{
          [&](const Isotropic& c) {
            const double s = std::sqrt(c.sigma_sq);
            for (Eigen::Index i = 0; i < n; ++i)
              for (Eigen::Index j = 0; j < d; ++j) out(i, j) = s * rng.normal();
          },
          [&](const Diagonal& c) {
            const Vector s = c.entries.cwiseSqrt();
            for (Eigen::Index i = 0; i < n; ++i)
              for (Eigen::Index j = 0; j < d; ++j) out(i, j) = s[j] * rng.normal();
          },
          [&](const Dense& c) {
            const auto lower = c.chol->matrixL();
            Vector z(d);
            for (Eigen::Index i = 0; i < n; ++i) {
              for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
              out.row(i) = (lower * z).transpose();
            }
          },
          [&](const LowRankRidge& c) {
            const double s = std::sqrt(c.lambda0);
            const Eigen::Index r = c.factors.cols();
            const Vector w = c.weights.cwiseSqrt();
            Vector z(d), y(r);
            for (Eigen::Index i = 0; i < n; ++i) {
              for (Eigen::Index j = 0; j < d; ++j) z[j] = s * rng.normal();
              for (Eigen::Index k = 0; k < r; ++k) y[k] = w[k] * rng.normal();
              if (r > 0) z.noalias() += c.factors * y;
              out.row(i) = z.transpose();
            }
          },
      },
      rep_);
  return out;
}

Covariance Covariance::scaled(double factor) const {
  require_finite_positive(factor, "covariance scale factor");
  return std::visit(
      Overloaded{
          [&](const Isotropic& c) { return Covariance(dim_, Isotropic{c.sigma_sq * factor}); },
          [&](const Diagonal& c) { return diagonal(c.entries * factor); },
          [&](const Dense& c) { return dense(c.matrix * factor); },
          [&](const LowRankRidge& c) {
            return low_rank_ridge(c.lambda0 * factor, c.factors, c.weights * factor);
          },
      },
      rep_);
}

bool operator==(const Covariance& a, const Covariance& b) {
  if (a.dim_ != b.dim_ || a.rep_.index() != b.rep_.index()) return false;
  return std::visit(
      Overloaded{
          [&](const Covariance::Isotropic& x) {
            return x.sigma_sq == std::get<Covariance::Isotropic>(b.rep_).sigma_sq;
          },
          [&](const Covariance::Diagonal& x) {
            return x.entries == std::get<Covariance::Diagonal>(b.rep_).entries;
          },
          [&](const Covariance::Dense& x) {
            return x.matrix == std::get<Covariance::Dense>(b.rep_).matrix;
          },
          [&](const Covariance::LowRankRidge& x) {
            const auto& y = std::get<Covariance::LowRankRidge>(b.rep_);
            return x.lambda0 == y.lambda0 && x.factors.cols() == y.factors.cols() &&
                   x.factors == y.factors && x.weights == y.weights;
          },
      },
      a.rep_);
}

Covariance add(const Covariance& a, const Covariance& b) {
  require_same_dim(a.dim(), b.dim(), "add");
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  using K = Covariance::Kind;
  const K ka = a.kind();
  const K kb = b.kind();
  if (ka == K::Isotropic && kb == K::Isotropic) {
    return Covariance::isotropic(a.dim(), a.get_if<Covariance::Isotropic>()->sigma_sq +
                                              b.get_if<Covariance::Isotropic>()->sigma_sq);
  }
  if (ka == K::Dense || kb == K::Dense) {
    return Covariance::dense(a.materialize() + b.materialize());
  }
  if (ka == K::LowRankRidge || kb == K::LowRankRidge) {
    const Covariance& lr = ka == K::LowRankRidge ? a : b;
    const Covariance& other = ka == K::LowRankRidge ? b : a;
    const auto& x = *lr.get_if<Covariance::LowRankRidge>();
    if (other.kind() == K::Isotropic) {
      return Covariance::low_rank_ridge(x.lambda0 + other.get_if<Covariance::Isotropic>()->sigma_sq,
                                        x.factors, x.weights);
    }
    if (other.kind() == K::LowRankRidge) {
      const auto& y = *other.get_if<Covariance::LowRankRidge>();
      Matrix factors(x.factors.rows(), x.factors.cols() + y.factors.cols());
      factors << x.factors, y.factors;
      Vector weights(x.weights.size() + y.weights.size());
      weights << x.weights, y.weights;
      return Covariance::low_rank_ridge(x.lambda0 + y.lambda0, std::move(factors), std::move(weights));
    }
    return Covariance::dense(a.materialize() + b.materialize());
  }
  // iso/diag + diag
  return Covariance::diagonal(a.diagonal_entries() + b.diagonal_entries());
}

}  // namespace vperturb::gauss
