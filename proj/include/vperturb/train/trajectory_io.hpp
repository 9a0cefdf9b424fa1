#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

#include "vperturb/train/sgd.hpp"

namespace vperturb::train {

inline constexpr int kTrajectoryFormatVersion = 1;

nlohmann::ordered_json to_json(const ModelSpec& spec);
nlohmann::ordered_json to_json(const DatasetSpec& spec);
nlohmann::ordered_json to_json(const SgdConfig& config);
ModelSpec model_spec_from_json(const nlohmann::json& j);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
SgdConfig sgd_config_from_json(const nlohmann::json& j);

// JSON Lines: a header object, then one object per update with keys
// t, w, eta, batch, g, g_sub, loss_train, loss_eval. Floats carry 17
// significant digits so load(save(x)) == x exactly.
void write_trajectory(const Trajectory& traj, std::ostream& out);
Trajectory read_trajectory(std::istream& in);

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

// FNV-1a of the serialized form; identifies a trajectory in reports.
std::string trajectory_hash(const Trajectory& traj);

}  // namespace vperturb::train
