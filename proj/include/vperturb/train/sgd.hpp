#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vperturb/train/problem.hpp"

namespace vperturb::train {

struct StepSize {
  enum class Kind { Constant, InverseT };

  Kind kind = Kind::Constant;
  double eta0 = 0.1;

  // eta_t for t >= 1.
  double at(std::size_t t) const;
  bool operator==(const StepSize&) const = default;
};

std::string to_string(StepSize::Kind kind);
StepSize::Kind step_size_kind_from_string(const std::string& name);

struct SgdConfig {
  // Number of iterates W_1..W_T; T-1 updates are recorded.
  std::size_t horizon = 10;
  StepSize eta;
  std::size_t batch = 10;
  bool with_replacement = false;
  // Number of disjoint subbatches recorded per step (0 disables, otherwise >= 2).
  std::size_t subbatches = 2;
  std::uint64_t seed = 0;
  // W_1; empty means the zero vector.
  std::vector<double> w_init;

  bool operator==(const SgdConfig&) const = default;
};

struct StepRecord {
  std::size_t t = 0;
  Vector w;
  double eta = 0.0;
  std::vector<std::size_t> batch;
  Vector g;
  std::vector<Vector> g_sub;
  double loss_train = 0.0;
  double loss_eval = 0.0;
};

bool operator==(const StepRecord& a, const StepRecord& b);

struct TrajectoryMeta {
  ModelSpec model;
  DatasetSpec dataset;
  SgdConfig sgd;
  std::size_t dim = 0;
  std::string tool_version;
  std::string config_hash;

  bool operator==(const TrajectoryMeta&) const = default;
};

// Recorded SGD run: steps[k] describes update t = k + 1, taking W_t to W_{t+1}.
struct Trajectory {
  TrajectoryMeta meta;
  std::vector<StepRecord> steps;

  std::size_t horizon() const { return steps.size() + 1; }
  // W_t for 1 <= t <= T.
  Vector iterate(std::size_t t) const;
  Vector final_iterate() const;
};

bool operator==(const Trajectory& a, const Trajectory& b);

// Disjoint contiguous split of a batch into `parts` pieces; the first
// (size % parts) pieces receive one extra index.
std::vector<std::vector<std::size_t>> split_batch(const std::vector<std::size_t>& batch, std::size_t parts);

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, bool with_replacement,
                                      std::uint64_t seed, std::size_t t);

// Vanilla SGD W_{t+1} = W_t - eta_t g(W_t, J_t). No perturbation enters the update.
Trajectory run_sgd(const Problem& problem, const SgdConfig& config);

// max_t |W_{t+1} - (W_t - eta_t g_t)|_inf over recorded steps.
double replay_error(const Trajectory& traj);

// Divergence guard threshold on |w|.
inline constexpr double kDivergenceNorm = 1e8;

}  // namespace vperturb::train
