#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <string_view>
#include <variant>

#include "vperturb/gauss/random.hpp"

namespace vperturb::gauss {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Symmetric positive-definite covariance with one of four structures.
//
// Values are immutable after construction and cheap to copy (factorizations
// are shared). The only non-PD value is the zero sentinel, Isotropic(0), used
// for the empty accumulated covariance; solving against it is a DomainError.
class Covariance {
 public:
  enum class Kind { Isotropic, Diagonal, Dense, LowRankRidge };

  struct Isotropic {
    double sigma_sq;
  };
  struct Diagonal {
    Vector entries;
  };
  struct Dense {
    Matrix matrix;
    std::shared_ptr<const Eigen::LLT<Matrix>> chol;
  };
  // lambda0 * I + factors * diag(weights) * factors^T
  struct LowRankRidge {
    double lambda0;
    Matrix factors;
    Vector weights;
    // Cholesky of the capacitance matrix diag(1/weights) + factors^T factors / lambda0.
    std::shared_ptr<const Eigen::LLT<Matrix>> capacitance;
  };

  static constexpr double kPivotTolerance = 1e-12;

  static Covariance isotropic(std::size_t dim, double sigma_sq);
  static Covariance diagonal(Vector entries);
  static Covariance dense(Matrix matrix);
  static Covariance low_rank_ridge(double lambda0, Matrix factors, Vector weights);
  // Isotropic(0) of the given dimension.
  static Covariance zero(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  Kind kind() const noexcept { return static_cast<Kind>(rep_.index()); }
  std::string_view kind_name() const noexcept;
  bool is_zero() const noexcept;

  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&rep_);
  }

  double trace() const;
  double logdet() const;
  // Sigma^{-1} x. Woodbury identity for LowRankRidge.
  Vector solve(const Vector& x) const;
  Matrix solve(const Matrix& x) const;
  Vector apply(const Vector& x) const;
  Matrix materialize() const;
  Vector diagonal_entries() const;
  // A lower bound on the smallest eigenvalue: exact except for LowRankRidge,
  // where lambda0 is returned.
  double min_eigenvalue_bound() const;

  // count x dim matrix whose rows are i.i.d. N(0, Sigma). Each row consumes
  // dim standard normals (plus rank normals for LowRankRidge) in order.
  Matrix sample(std::size_t count, RandomStream& rng) const;

  Covariance scaled(double c) const;

  // Structural equality (same representation, same numbers).
  friend bool operator==(const Covariance& a, const Covariance& b);

 private:
  using Rep = std::variant<Isotropic, Diagonal, Dense, LowRankRidge>;
  Covariance(std::size_t dim, Rep rep) : dim_(dim), rep_(std::move(rep)) {}

  std::size_t dim_;
  Rep rep_;
};

// Sum with representation promotion:
//   zero + X -> X;  iso + iso -> iso;  iso/diag + diag -> diag;
//   anything + dense -> dense;  lowrank + iso -> lowrank;
//   lowrank + lowrank -> lowrank (concatenated factors);  lowrank + diag -> dense.
Covariance add(const Covariance& a, const Covariance& b);

inline double trace(const Covariance& c) { return c.trace(); }
inline double logdet(const Covariance& c) { return c.logdet(); }
inline Covariance scale(const Covariance& c, double factor) { return c.scaled(factor); }

}  // namespace vperturb::gauss
