#include "vperturb/train/trajectory_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "vperturb/errors.hpp"
#include "vperturb/io/json_text.hpp"

namespace vperturb::train {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json vector_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vector_from_json(const json& j, std::size_t dim, const char* key, std::size_t line) {
  if (!j.is_array() || j.size() != dim) {
    throw FormatError(std::string("field '") + key + "' must be an array of " + std::to_string(dim) +
                          " numbers",
                      line);
  }
  Vector v(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    if (!j[i].is_number()) throw FormatError(std::string("field '") + key + "' has a non-number", line);
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

double number(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw FormatError(std::string("missing numeric field '") + key + "'", line);
  }
  return j.at(key).get<double>();
}

ordered_json step_json(const StepRecord& s) {
  ordered_json j;
  j["t"] = s.t;
  j["w"] = vector_json(s.w);
  j["eta"] = s.eta;
  j["batch"] = s.batch;
  j["g"] = vector_json(s.g);
  if (s.g_sub.empty()) {
    j["g_sub"] = nullptr;
  } else {
    ordered_json subs = ordered_json::array();
    for (const auto& g : s.g_sub) subs.push_back(vector_json(g));
    j["g_sub"] = std::move(subs);
  }
  j["loss_train"] = s.loss_train;
  j["loss_eval"] = s.loss_eval;
  return j;
}

StepRecord step_from_json(const json& j, std::size_t dim, std::size_t line) {
  static const std::set<std::string> kKeys = {"t", "w", "eta", "batch", "g", "g_sub", "loss_train", "loss_eval"};
  if (!j.is_object()) throw FormatError("step record must be a JSON object", line);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  if (keys != kKeys) throw FormatError("step record keys differ from the expected set", line);

  StepRecord s;
  if (!j["t"].is_number_unsigned()) throw FormatError("field 't' must be a positive integer", line);
  s.t = j["t"].get<std::size_t>();
  s.w = vector_from_json(j["w"], dim, "w", line);
  s.eta = number(j, "eta", line);
  if (!j["batch"].is_array()) throw FormatError("field 'batch' must be an array", line);
  for (const auto& b : j["batch"]) {
    if (!b.is_number_unsigned()) throw FormatError("field 'batch' must hold indices", line);
    s.batch.push_back(b.get<std::size_t>());
  }
  s.g = vector_from_json(j["g"], dim, "g", line);
  if (!j["g_sub"].is_null()) {
    if (!j["g_sub"].is_array()) throw FormatError("field 'g_sub' must be an array or null", line);
    for (const auto& g : j["g_sub"]) s.g_sub.push_back(vector_from_json(g, dim, "g_sub", line));
  }
  s.loss_train = number(j, "loss_train", line);
  s.loss_eval = number(j, "loss_eval", line);
  return s;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

ordered_json to_json(const ModelSpec& spec) {
  ordered_json j;
  j["kind"] = to_string(spec.kind);
  j["dim"] = spec.dim;
  j["hidden"] = spec.hidden;
  j["curvature"] = spec.curvature;
  j["curvature_min"] = spec.curvature_min;
  j["curvature_max"] = spec.curvature_max;
  j["l2"] = spec.l2;
  return j;
}

ordered_json to_json(const DatasetSpec& spec) {
  ordered_json j;
  j["n_train"] = spec.n_train;
  j["n_eval"] = spec.n_eval;
  j["task_seed"] = spec.task_seed;
  j["seed"] = spec.seed;
  j["eval_seed"] = spec.eval_seed;
  j["center_mean"] = spec.center_mean;
  j["center_std"] = spec.center_std;
  j["noise"] = spec.noise;
  return j;
}

ordered_json to_json(const SgdConfig& c) {
  ordered_json j;
  j["T"] = c.horizon;
  j["eta"] = {{"kind", to_string(c.eta.kind)}, {"eta0", c.eta.eta0}};
  j["batch"] = c.batch;
  j["with_replacement"] = c.with_replacement;
  j["subbatches"] = c.subbatches;
  j["seed"] = c.seed;
  j["w_init"] = c.w_init;
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  s.kind = model_kind_from_string(j.at("kind").get<std::string>());
  s.dim = j.at("dim").get<std::size_t>();
  s.hidden = get_or<std::size_t>(j, "hidden", s.hidden);
  s.curvature = get_or<std::vector<double>>(j, "curvature", {});
  s.curvature_min = get_or<double>(j, "curvature_min", s.curvature_min);
  s.curvature_max = get_or<double>(j, "curvature_max", s.curvature_max);
  s.l2 = get_or<double>(j, "l2", s.l2);
  return s;
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  s.n_train = j.at("n_train").get<std::size_t>();
  s.n_eval = j.at("n_eval").get<std::size_t>();
  s.task_seed = j.at("task_seed").get<std::uint64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.eval_seed = j.at("eval_seed").get<std::uint64_t>();
  s.center_mean = get_or<std::vector<double>>(j, "center_mean", {});
  s.center_std = get_or<double>(j, "center_std", s.center_std);
  s.noise = get_or<double>(j, "noise", s.noise);
  return s;
}

SgdConfig sgd_config_from_json(const json& j) {
  SgdConfig c;
  c.horizon = j.at("T").get<std::size_t>();
  c.eta.kind = step_size_kind_from_string(j.at("eta").at("kind").get<std::string>());
  c.eta.eta0 = j.at("eta").at("eta0").get<double>();
  c.batch = j.at("batch").get<std::size_t>();
  c.with_replacement = j.at("with_replacement").get<bool>();
  c.subbatches = j.at("subbatches").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.w_init = get_or<std::vector<double>>(j, "w_init", {});
  return c;
}

void write_trajectory(const Trajectory& traj, std::ostream& out) {
  ordered_json header;
  header["version"] = kTrajectoryFormatVersion;
  header["d"] = traj.meta.dim;
  header["T"] = traj.horizon();
  header["model"] = to_json(traj.meta.model);
  header["dataset"] = to_json(traj.meta.dataset);
  header["seed"] = traj.meta.sgd.seed;
  header["eta"] = {{"kind", to_string(traj.meta.sgd.eta.kind)}, {"eta0", traj.meta.sgd.eta.eta0}};
  header["sgd"] = to_json(traj.meta.sgd);
  header["tool_version"] = traj.meta.tool_version;
  header["config_hash"] = traj.meta.config_hash;
  out << io::dump(header) << '\n';
  for (const auto& s : traj.steps) out << io::dump(step_json(s)) << '\n';
}

Trajectory read_trajectory(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  Trajectory traj;
  std::size_t horizon = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!have_header) {
      if (!j.is_object() || !j.contains("version")) throw FormatError("missing trajectory header", line_no);
      if (j["version"] != kTrajectoryFormatVersion) {
        throw FormatError("unsupported trajectory version " + j["version"].dump(), line_no);
      }
      try {
        traj.meta.dim = j.at("d").get<std::size_t>();
        horizon = j.at("T").get<std::size_t>();
        traj.meta.model = model_spec_from_json(j.at("model"));
        traj.meta.dataset = dataset_spec_from_json(j.at("dataset"));
        traj.meta.sgd = sgd_config_from_json(j.at("sgd"));
        traj.meta.tool_version = get_or<std::string>(j, "tool_version", "");
        traj.meta.config_hash = get_or<std::string>(j, "config_hash", "");
      } catch (const json::exception& e) {
        throw FormatError(std::string("bad header: ") + e.what(), line_no);
      } catch (const InputError& e) {
        throw FormatError(std::string("bad header: ") + e.what(), line_no);
      }
      have_header = true;
      continue;
    }
    StepRecord s = step_from_json(j, traj.meta.dim, line_no);
    if (s.t != traj.steps.size() + 1) throw FormatError("step index out of sequence", line_no);
    traj.steps.push_back(std::move(s));
  }
  if (!have_header) throw FormatError("empty trajectory file", line_no);
  if (traj.steps.size() + 1 != horizon) {
    throw FormatError("expected " + std::to_string(horizon - 1) + " step records, found " +
                          std::to_string(traj.steps.size()),
                      line_no);
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_trajectory(traj, out);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_trajectory(in);
}

std::string trajectory_hash(const Trajectory& traj) {
  std::ostringstream os;
  write_trajectory(traj, os);
  return io::fnv1a_hex(os.str());
}

}  // namespace vperturb::train
