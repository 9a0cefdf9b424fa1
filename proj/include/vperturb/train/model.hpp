#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace vperturb::train {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Batch = std::span<const std::size_t>;

// Row i of `inputs` and entry i of `targets` form sample z_i. Quadratic
// models use the input row as the center and ignore targets.
struct SampleSet {
  Matrix inputs;
  Vector targets;

  std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
};

std::vector<std::size_t> all_indices(std::size_t n);

// Per-sample loss l(w, z) with exact first and second derivatives. The
// batch-level methods return means over the listed samples.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t dim() const noexcept = 0;
  virtual std::string_view name() const noexcept = 0;

  double loss(const Vector& w, const SampleSet& data, Batch batch) const;
  double loss(const Vector& w, const SampleSet& data) const;
  Vector grad(const Vector& w, const SampleSet& data, Batch batch) const;
  Vector grad(const Vector& w, const SampleSet& data) const;
  // Hessian of the mean loss applied to v.
  Vector hvp(const Vector& w, const Vector& v, const SampleSet& data, Batch batch) const;
  Vector hvp(const Vector& w, const Vector& v, const SampleSet& data) const;

 protected:
  virtual double loss_impl(const Vector& w, const SampleSet& data, Batch batch) const = 0;
  virtual Vector grad_impl(const Vector& w, const SampleSet& data, Batch batch) const = 0;
  virtual Vector hvp_impl(const Vector& w, const Vector& v, const SampleSet& data,
                          Batch batch) const = 0;

 private:
  void check(const Vector& w, const SampleSet& data, Batch batch) const;
};

// l(w, z) = 0.5 (w - z)^T A (w - z).
class QuadraticModel final : public Model {
 public:
  explicit QuadraticModel(Matrix curvature);

  std::size_t dim() const noexcept override { return static_cast<std::size_t>(a_.rows()); }
  std::string_view name() const noexcept override { return "quadratic"; }
  const Matrix& curvature() const noexcept { return a_; }

 protected:
  double loss_impl(const Vector& w, const SampleSet& data, Batch batch) const override;
  Vector grad_impl(const Vector& w, const SampleSet& data, Batch batch) const override;
  Vector hvp_impl(const Vector& w, const Vector& v, const SampleSet& data, Batch batch) const override;

 private:
  Matrix a_;
};

// Cross-entropy on labels in {0, 1} plus (l2 / 2) |w|^2 per sample.
class LogisticModel final : public Model {
 public:
  LogisticModel(std::size_t dim, double l2);

  std::size_t dim() const noexcept override { return dim_; }
  std::string_view name() const noexcept override { return "logistic"; }

 protected:
  double loss_impl(const Vector& w, const SampleSet& data, Batch batch) const override;
  Vector grad_impl(const Vector& w, const SampleSet& data, Batch batch) const override;
  Vector hvp_impl(const Vector& w, const Vector& v, const SampleSet& data, Batch batch) const override;

 private:
  std::size_t dim_;
  double l2_;
};

// One hidden tanh layer, scalar output, squared loss 0.5 (f(x) - y)^2.
// Parameter layout: W1 (hidden x inputs, row-major), b1, w2, b2.
class MlpModel final : public Model {
 public:
  MlpModel(std::size_t inputs, std::size_t hidden);

  std::size_t dim() const noexcept override { return hidden_ * inputs_ + 2 * hidden_ + 1; }
  std::string_view name() const noexcept override { return "mlp"; }
  std::size_t inputs() const noexcept { return inputs_; }
  std::size_t hidden() const noexcept { return hidden_; }

  double predict(const Vector& w, const Vector& x) const;

 protected:
  double loss_impl(const Vector& w, const SampleSet& data, Batch batch) const override;
  Vector grad_impl(const Vector& w, const SampleSet& data, Batch batch) const override;
  Vector hvp_impl(const Vector& w, const Vector& v, const SampleSet& data, Batch batch) const override;

 private:
  std::size_t inputs_;
  std::size_t hidden_;
};

}  // namespace vperturb::train
