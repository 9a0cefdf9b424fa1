#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vperturb/bound/bound.hpp"
#include "vperturb/proxies/proxies.hpp"
#include "vperturb/schedule/schedule.hpp"
#include "vperturb/train/problem.hpp"
#include "vperturb/train/sgd.hpp"

namespace vperturb::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct ReferenceConfig {
  schedule::ReferenceMode mode = schedule::ReferenceMode::SynchronizedDeterministic;
  std::optional<std::uint64_t> public_seed;
  // Ghost run: same population, independent training sample and minibatches.
  std::uint64_t ghost_seed = 0;
  std::uint64_t ghost_data_seed = 0;
  std::vector<gauss::Covariance> covariances;
};

struct BoundConfig {
  double r = 1.0;
  std::optional<std::size_t> n;
  bound::BoundVariant variant = bound::BoundVariant::General;
  bound::PenaltyControl penalty = bound::PenaltyControl::Raw;
  double mu = 0.0;
  double rho_train = 0.0;
  double rho_eval = 0.0;
  std::optional<double> kappa;
};

struct OutputConfig {
  std::string trajectory = "trajectory.jsonl";
  std::string prefix = "diagnostics";
  std::string format = "csv";
};

struct Config {
  train::ModelSpec model;
  train::DatasetSpec dataset;
  train::SgdConfig sgd;
  // dim and horizon are filled from the model and sgd.T.
  schedule::ScheduleSpec schedule;
  ReferenceConfig reference;
  proxies::ProxyOptions proxies;
  // True when [proxies].checkpoints is absent or "all".
  bool all_checkpoints = true;
  BoundConfig bound;
  OutputConfig output;
};

// Parameter count of the model a spec describes.
std::size_t parameter_dim(const train::ModelSpec& spec);

// Parses TOML text. Unknown sections or keys and missing required keys raise
// ConfigError naming the key ("sgd.T").
Config parse_config(const std::string& text, const std::string& origin = "<config>");
Config load_config(const std::filesystem::path& path);

// Applies --seed-override: replaces sgd.seed and proxies.seed.
void override_seed(Config& config, std::uint64_t seed);

// Fully resolved configuration, echoed into every output.
nlohmann::ordered_json resolved_json(const Config& config);
std::string config_hash(const Config& config);

// Builds the reference for `spec` from the [reference] section. Ghost mode
// runs the ghost trajectory.
schedule::ReferenceSpec build_reference(const Config& config, const schedule::ScheduleSpec& spec);

train::Trajectory ghost_trajectory(const Config& config);

}  // namespace vperturb::cli
