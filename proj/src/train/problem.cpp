#include "vperturb/train/problem.hpp"

#include <Eigen/QR>

#include <cmath>

#include "vperturb/errors.hpp"
#include "vperturb/gauss/random.hpp"

namespace vperturb::train {

using gauss::RandomStream;

namespace {

// Stream ids within a seed.
enum : std::uint64_t { kTaskStream = 11, kTrainStream = 12, kEvalStream = 13, kFreshStream = 14 };

Vector normal_vector(Eigen::Index n, RandomStream& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

struct Task {
  std::shared_ptr<const Model> model;
  Vector center_mean;   // quadratic
  Vector true_weights;  // logistic
  Vector teacher;       // mlp
};

Task make_task(const ModelSpec& spec, const DatasetSpec& data) {
  if (spec.dim == 0) throw InputError("model.dim must be positive");
  const auto d = static_cast<Eigen::Index>(spec.dim);
  RandomStream rng(data.task_seed, kTaskStream);
  Task task;
  switch (spec.kind) {
    case ModelKind::Quadratic: {
      Matrix a;
      if (!spec.curvature.empty()) {
        if (spec.curvature.size() != spec.dim) throw InputError("model.curvature must have dim entries");
        a = Eigen::Map<const Vector>(spec.curvature.data(), d).asDiagonal();
        for (double c : spec.curvature) {
          if (!(c > 0.0)) throw InputError("model.curvature entries must be positive");
        }
      } else {
        if (!(spec.curvature_min > 0.0) || spec.curvature_max < spec.curvature_min) {
          throw InputError("model.curvature_min/max must satisfy 0 < min <= max");
        }
        Matrix g(d, d);
        for (Eigen::Index i = 0; i < d; ++i)
          for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
        const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
        Vector eig(d);
        for (Eigen::Index i = 0; i < d; ++i) {
          eig[i] = spec.curvature_min + (spec.curvature_max - spec.curvature_min) * rng.uniform();
        }
        a = q * eig.asDiagonal() * q.transpose();
        a = 0.5 * (a + a.transpose());
      }
      task.model = std::make_shared<QuadraticModel>(std::move(a));
      if (data.center_mean.empty()) {
        task.center_mean = Vector::Zero(d);
      } else {
        if (data.center_mean.size() != spec.dim) {
          throw InputError("dataset.center_mean must have dim entries");
        }
        task.center_mean = Eigen::Map<const Vector>(data.center_mean.data(), d);
      }
      break;
    }
    case ModelKind::Logistic:
      task.model = std::make_shared<LogisticModel>(spec.dim, spec.l2);
      task.true_weights = normal_vector(d, rng);
      break;
    case ModelKind::Mlp: {
      auto mlp = std::make_shared<MlpModel>(spec.dim, spec.hidden);
      task.teacher = normal_vector(static_cast<Eigen::Index>(mlp->dim()), rng);
      task.model = std::move(mlp);
      break;
    }
  }
  return task;
}

SampleSet draw_samples(const ModelSpec& spec, const DatasetSpec& data, const Task& task, std::size_t count,
                       RandomStream rng) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const auto n = static_cast<Eigen::Index>(count);
  SampleSet s;
  s.inputs.resize(n, d);
  s.targets = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) s.inputs(i, j) = rng.normal();
    switch (spec.kind) {
      case ModelKind::Quadratic:
        s.inputs.row(i) = (task.center_mean + data.center_std * s.inputs.row(i).transpose()).transpose();
        break;
      case ModelKind::Logistic: {
        const double logit = s.inputs.row(i).dot(task.true_weights);
        const double p = 1.0 / (1.0 + std::exp(-logit));
        s.targets[i] = rng.uniform() < p ? 1.0 : 0.0;
        break;
      }
      case ModelKind::Mlp: {
        const auto& mlp = static_cast<const MlpModel&>(*task.model);
        s.targets[i] = mlp.predict(task.teacher, s.inputs.row(i).transpose()) + data.noise * rng.normal();
        break;
      }
    }
  }
  return s;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Quadratic: return "quadratic";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Mlp: return "mlp";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "quadratic") return ModelKind::Quadratic;
  if (name == "logistic") return ModelKind::Logistic;
  if (name == "mlp") return ModelKind::Mlp;
  throw InputError("unknown model kind '" + name + "'");
}

Problem make_problem(const ModelSpec& model, const DatasetSpec& data) {
  if (data.n_train == 0) throw InputError("dataset.n_train must be positive");
  const Task task = make_task(model, data);
  Problem p;
  p.model_spec = model;
  p.data_spec = data;
  p.model = task.model;
  p.train = draw_samples(model, data, task, data.n_train, RandomStream(data.seed, kTrainStream));
  p.eval = draw_samples(model, data, task, data.n_eval, RandomStream(data.eval_seed, kEvalStream));
  if (model.kind == ModelKind::Quadratic) p.center_mean = task.center_mean;
  return p;
}

SampleSet draw_population_samples(const Problem& problem, std::size_t count, std::uint64_t seed) {
  const Task task = make_task(problem.model_spec, problem.data_spec);
  return draw_samples(problem.model_spec, problem.data_spec, task, count, RandomStream(seed, kFreshStream));
}

PopulationGradient population_gradient(const Problem& problem, const Vector& w) {
  if (problem.center_mean) {
    const auto& quad = static_cast<const QuadraticModel&>(*problem.model);
    return {quad.curvature() * (w - *problem.center_mean), true};
  }
  if (problem.eval.size() == 0) throw InputError("population gradient proxy needs evaluation samples");
  return {problem.model->grad(w, problem.eval), false};
}

}  // namespace vperturb::train
