#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vperturb/train/model.hpp"

namespace vperturb::train {

enum class ModelKind { Quadratic, Logistic, Mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelSpec {
  ModelKind kind = ModelKind::Quadratic;
  // Parameter dimension for quadratic/logistic; input dimension for mlp.
  std::size_t dim = 2;
  std::size_t hidden = 8;
  // Quadratic: diagonal of A when nonempty, otherwise a random rotation of
  // eigenvalues drawn uniformly from [curvature_min, curvature_max].
  std::vector<double> curvature;
  double curvature_min = 0.5;
  double curvature_max = 2.0;
  double l2 = 0.0;

  bool operator==(const ModelSpec&) const = default;
};

// The task seed fixes the population (A, true logistic weights, teacher
// network); `seed` and `eval_seed` draw the training and evaluation samples.
struct DatasetSpec {
  std::size_t n_train = 200;
  std::size_t n_eval = 1000;
  std::uint64_t task_seed = 1;
  std::uint64_t seed = 2;
  std::uint64_t eval_seed = 3;
  // Quadratic centers ~ N(center_mean, center_std^2 I); empty mean means 0.
  std::vector<double> center_mean;
  double center_std = 1.0;
  // Observation noise for mlp targets.
  double noise = 0.1;

  bool operator==(const DatasetSpec&) const = default;
};

// Model plus its training sample S and independent evaluation sample S'.
struct Problem {
  ModelSpec model_spec;
  DatasetSpec data_spec;
  std::shared_ptr<const Model> model;
  SampleSet train;
  SampleSet eval;
  // Population mean of the quadratic centers.
  std::optional<Vector> center_mean;

  std::size_t dim() const { return model->dim(); }
};

Problem make_problem(const ModelSpec& model, const DatasetSpec& data);

// Draws `count` fresh samples from the population of `problem`.
SampleSet draw_population_samples(const Problem& problem, std::size_t count, std::uint64_t seed);

struct PopulationGradient {
  Vector value;
  // True when computed in closed form; false for the evaluation-set proxy.
  bool analytic;
};

// Analytic A (w - mu_c) for quadratics, otherwise g(w, eval set).
PopulationGradient population_gradient(const Problem& problem, const Vector& w);

}  // namespace vperturb::train
