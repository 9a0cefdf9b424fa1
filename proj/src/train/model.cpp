#include "vperturb/train/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "vperturb/errors.hpp"

namespace vperturb::train {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void Model::check(const Vector& w, const SampleSet& data, Batch batch) const {
  if (batch.empty()) throw InputError("empty batch");
  if (static_cast<std::size_t>(w.size()) != dim()) {
    throw InputError("parameter vector has dimension " + std::to_string(w.size()) + ", model expects " +
                     std::to_string(dim()));
  }
  if (!w.allFinite()) throw InputError("non-finite parameter vector");
  for (auto i : batch) {
    if (i >= data.size()) throw InputError("batch index " + std::to_string(i) + " out of range");
  }
}

double Model::loss(const Vector& w, const SampleSet& data, Batch batch) const {
  check(w, data, batch);
  return loss_impl(w, data, batch);
}

double Model::loss(const Vector& w, const SampleSet& data) const {
  const auto idx = all_indices(data.size());
  return loss(w, data, idx);
}

Vector Model::grad(const Vector& w, const SampleSet& data, Batch batch) const {
  check(w, data, batch);
  return grad_impl(w, data, batch);
}

Vector Model::grad(const Vector& w, const SampleSet& data) const {
  const auto idx = all_indices(data.size());
  return grad(w, data, idx);
}

Vector Model::hvp(const Vector& w, const Vector& v, const SampleSet& data, Batch batch) const {
  check(w, data, batch);
  if (v.size() != w.size()) throw InputError("hvp direction has wrong dimension");
  return hvp_impl(w, v, data, batch);
}

Vector Model::hvp(const Vector& w, const Vector& v, const SampleSet& data) const {
  const auto idx = all_indices(data.size());
  return hvp(w, v, data, idx);
}

//---------------------------------------------------------------------------//
// Quadratic
//---------------------------------------------------------------------------//

QuadraticModel::QuadraticModel(Matrix curvature) : a_(std::move(curvature)) {
  if (a_.rows() == 0 || a_.rows() != a_.cols()) throw InputError("curvature must be square");
}

double QuadraticModel::loss_impl(const Vector& w, const SampleSet& data, Batch batch) const {
  double total = 0.0;
  Vector diff(w.size());
  for (auto i : batch) {
    diff = w - data.inputs.row(static_cast<Eigen::Index>(i)).transpose();
    total += 0.5 * diff.dot(a_ * diff);
  }
  return total / static_cast<double>(batch.size());
}

Vector QuadraticModel::grad_impl(const Vector& w, const SampleSet& data, Batch batch) const {
  Vector center = Vector::Zero(w.size());
  for (auto i : batch) center += data.inputs.row(static_cast<Eigen::Index>(i)).transpose();
  center /= static_cast<double>(batch.size());
  return a_ * (w - center);
}

Vector QuadraticModel::hvp_impl(const Vector&, const Vector& v, const SampleSet&, Batch) const {
  return a_ * v;
}

//---------------------------------------------------------------------------//
// Logistic
//---------------------------------------------------------------------------//

namespace {

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + exp(s)) without overflow.
double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

}  // namespace

LogisticModel::LogisticModel(std::size_t dim, double l2) : dim_(dim), l2_(l2) {
  if (dim == 0) throw InputError("logistic model needs positive dimension");
  if (!(l2 >= 0.0)) throw InputError("l2 regularization must be nonnegative");
}

double LogisticModel::loss_impl(const Vector& w, const SampleSet& data, Batch batch) const {
  double total = 0.0;
  for (auto i : batch) {
    const auto row = static_cast<Eigen::Index>(i);
    const double s = data.inputs.row(row).dot(w);
    const double y = data.targets[row];
    // -y log p - (1 - y) log(1 - p) with p = sigmoid(s)
    total += softplus(s) - y * s;
  }
  return total / static_cast<double>(batch.size()) + 0.5 * l2_ * w.squaredNorm();
}

Vector LogisticModel::grad_impl(const Vector& w, const SampleSet& data, Batch batch) const {
  Vector g = Vector::Zero(w.size());
  for (auto i : batch) {
    const auto row = static_cast<Eigen::Index>(i);
    const double p = sigmoid(data.inputs.row(row).dot(w));
    g += (p - data.targets[row]) * data.inputs.row(row).transpose();
  }
  g /= static_cast<double>(batch.size());
  g += l2_ * w;
  return g;
}

Vector LogisticModel::hvp_impl(const Vector& w, const Vector& v, const SampleSet& data,
                               Batch batch) const {
  Vector out = Vector::Zero(w.size());
  for (auto i : batch) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto x = data.inputs.row(row).transpose();
    const double p = sigmoid(x.dot(w));
    out += p * (1.0 - p) * x.dot(v) * x;
  }
  out /= static_cast<double>(batch.size());
  out += l2_ * v;
  return out;
}

//---------------------------------------------------------------------------//
// MLP
//---------------------------------------------------------------------------//

namespace {

struct MlpView {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Vector> w2;
  double b2;

  MlpView(const Vector& p, Eigen::Index in, Eigen::Index h)
      : w1(p.data(), h, in), b1(p.data() + h * in, h), w2(p.data() + h * in + h, h),
        b2(p[h * in + 2 * h]) {}
};

}  // namespace

MlpModel::MlpModel(std::size_t inputs, std::size_t hidden) : inputs_(inputs), hidden_(hidden) {
  if (inputs == 0 || hidden == 0) throw InputError("mlp needs positive input and hidden sizes");
}

double MlpModel::predict(const Vector& w, const Vector& x) const {
  const auto in = static_cast<Eigen::Index>(inputs_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  MlpView p(w, in, h);
  const Vector z = (p.w1 * x + p.b1).array().tanh().matrix();
  return p.w2.dot(z) + p.b2;
}

double MlpModel::loss_impl(const Vector& w, const SampleSet& data, Batch batch) const {
  double total = 0.0;
  for (auto i : batch) {
    const auto row = static_cast<Eigen::Index>(i);
    const double r = predict(w, data.inputs.row(row).transpose()) - data.targets[row];
    total += 0.5 * r * r;
  }
  return total / static_cast<double>(batch.size());
}

Vector MlpModel::grad_impl(const Vector& w, const SampleSet& data, Batch batch) const {
  const auto in = static_cast<Eigen::Index>(inputs_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  MlpView p(w, in, h);
  Vector g = Vector::Zero(w.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw1(g.data(), h, in);
  auto gb1 = g.segment(h * in, h);
  auto gw2 = g.segment(h * in + h, h);
  for (auto i : batch) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector x = data.inputs.row(row).transpose();
    const Vector z = (p.w1 * x + p.b1).array().tanh().matrix();
    const double r = p.w2.dot(z) + p.b2 - data.targets[row];
    const Vector delta = r * p.w2.cwiseProduct((1.0 - z.array().square()).matrix());
    gw1 += delta * x.transpose();
    gb1 += delta;
    gw2 += r * z;
    g[h * in + 2 * h] += r;
  }
  g /= static_cast<double>(batch.size());
  return g;
}

// Pearlmutter R-operator applied to the manual backward pass.
Vector MlpModel::hvp_impl(const Vector& w, const Vector& v, const SampleSet& data, Batch batch) const {
  const auto in = static_cast<Eigen::Index>(inputs_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  MlpView p(w, in, h);
  MlpView dp(v, in, h);
  Vector out = Vector::Zero(w.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ow1(out.data(), h, in);
  auto ob1 = out.segment(h * in, h);
  auto ow2 = out.segment(h * in + h, h);
  for (auto i : batch) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector x = data.inputs.row(row).transpose();
    const Vector z = (p.w1 * x + p.b1).array().tanh().matrix();
    const Vector s = (1.0 - z.array().square()).matrix();
    const double r = p.w2.dot(z) + p.b2 - data.targets[row];

    const Vector ra = dp.w1 * x + dp.b1;
    const Vector rz = s.cwiseProduct(ra);
    const double rr = dp.w2.dot(z) + p.w2.dot(rz) + dp.b2;
    const Vector rs = -2.0 * z.cwiseProduct(rz);
    const Vector rdelta = rr * p.w2.cwiseProduct(s) + r * dp.w2.cwiseProduct(s) + r * p.w2.cwiseProduct(rs);

    ow1 += rdelta * x.transpose();
    ob1 += rdelta;
    ow2 += rr * z + r * rz;
    out[h * in + 2 * h] += rr;
  }
  out /= static_cast<double>(batch.size());
  return out;
}

}  // namespace vperturb::train
