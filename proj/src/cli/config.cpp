#include "vperturb/cli/config.hpp"

#include <toml.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vperturb/errors.hpp"
#include "vperturb/io/json_text.hpp"
#include "vperturb/train/trajectory_io.hpp"

namespace vperturb::cli {

using nlohmann::ordered_json;

std::size_t parameter_dim(const train::ModelSpec& spec) {
  if (spec.kind == train::ModelKind::Mlp) return spec.hidden * spec.dim + 2 * spec.hidden + 1;
  return spec.dim;
}

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model", {"kind", "dim", "hidden", "curvature", "curvature_min", "curvature_max", "l2"}},
      {"dataset",
       {"n_train", "n_eval", "task_seed", "seed", "eval_seed", "center_mean", "center_std", "noise"}},
      {"sgd", {"T", "eta", "eta_schedule", "batch", "with_replacement", "subbatches", "seed", "w_init"}},
      {"schedule",
       {"kind", "sigma", "sigma0", "c", "beta", "rho", "rho_schedule", "eps", "lambda0", "rank", "stat",
        "public_seed", "covariances"}},
      {"reference", {"mode", "public_seed", "ghost_seed", "ghost_data_seed", "covariances"}},
      {"proxies", {"checkpoints", "m", "m_T", "deviation_mode", "seed", "common_random_numbers"}},
      {"bound", {"R", "n", "variant", "penalty", "mu", "rho_train", "rho_eval", "kappa"}},
      {"output", {"trajectory", "prefix", "format"}},
  };
  return keys;
}

// Typed access to one section, with "section.key" in every message.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool has(const std::string& key) const { return table_ && table_->contains(key); }
  std::string path(const std::string& key) const { return name_ + "." + key; }

  const toml::node& node(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required key '" + path(key) + "'");
    return *table_->get(key);
  }

  double number(const std::string& key) const {
    const auto& n = node(key);
    if (auto v = n.as_floating_point()) return v->get();
    if (auto v = n.as_integer()) return static_cast<double>(v->get());
    throw ConfigError("'" + path(key) + "' must be a number");
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::uint64_t integer(const std::string& key) const {
    const auto* v = node(key).as_integer();
    if (!v || v->get() < 0) throw ConfigError("'" + path(key) + "' must be a nonnegative integer");
    return static_cast<std::uint64_t>(v->get());
  }
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto* v = node(key).as_boolean();
    if (!v) throw ConfigError("'" + path(key) + "' must be a boolean");
    return v->get();
  }

  std::string string(const std::string& key) const {
    const auto* v = node(key).as_string();
    if (!v) throw ConfigError("'" + path(key) + "' must be a string");
    return v->get();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto* arr = node(key).as_array();
    if (!arr) throw ConfigError("'" + path(key) + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) {
      if (auto f = e.as_floating_point()) {
        out.push_back(f->get());
      } else if (auto i = e.as_integer()) {
        out.push_back(static_cast<double>(i->get()));
      } else {
        throw ConfigError("'" + path(key) + "' must be an array of numbers");
      }
    }
    return out;
  }

  // Array whose entries are either diagonal entries or matrices (arrays of rows).
  std::vector<gauss::Covariance> covariances(const std::string& key) const {
    const auto* arr = node(key).as_array();
    if (!arr) throw ConfigError("'" + path(key) + "' must be an array of covariances");
    std::vector<gauss::Covariance> out;
    auto row_of = [&](const toml::node& n) {
      const auto* a = n.as_array();
      if (!a) throw ConfigError("'" + path(key) + "' entries must be arrays");
      std::vector<double> r;
      for (const auto& e : *a) {
        if (auto f = e.as_floating_point()) {
          r.push_back(f->get());
        } else if (auto i = e.as_integer()) {
          r.push_back(static_cast<double>(i->get()));
        } else {
          throw ConfigError("'" + path(key) + "' entries must be numeric");
        }
      }
      return r;
    };
    try {
      for (const auto& entry : *arr) {
        const auto* a = entry.as_array();
        if (!a || a->empty()) throw ConfigError("'" + path(key) + "' entries must be nonempty arrays");
        if ((*a)[0].is_array()) {
          const auto n = static_cast<Eigen::Index>(a->size());
          gauss::Matrix m(n, n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto r = row_of((*a)[static_cast<std::size_t>(i)]);
            if (static_cast<Eigen::Index>(r.size()) != n) throw ConfigError("'" + path(key) + "' matrix not square");
            for (Eigen::Index j = 0; j < n; ++j) m(i, j) = r[static_cast<std::size_t>(j)];
          }
          out.push_back(gauss::Covariance::dense(m));
        } else {
          const auto r = row_of(entry);
          out.push_back(gauss::Covariance::diagonal(Eigen::Map<const gauss::Vector>(
              r.data(), static_cast<Eigen::Index>(r.size()))));
        }
      }
    } catch (const DomainError& e) {
      throw ConfigError("'" + path(key) + "': " + e.what());
    } catch (const InputError& e) {
      throw ConfigError("'" + path(key) + "': " + e.what());
    }
    return out;
  }

 private:
  const toml::table* table_;
  std::string name_;
};

template <class F>
auto translate(const std::string& key, F&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

}  // namespace

Config parse_config(const std::string& text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "cannot parse " << origin << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(os.str());
  }
  for (auto&& [k, v] : root) {
    const std::string name(k.str());
    const auto it = allowed_keys().find(name);
    if (it == allowed_keys().end()) throw ConfigError("unknown section '" + name + "'");
    if (!v.is_table()) throw ConfigError("'" + name + "' must be a table");
    for (auto&& [kk, vv] : *v.as_table()) {
      if (!it->second.count(std::string(kk.str()))) {
        throw ConfigError("unknown key '" + name + "." + std::string(kk.str()) + "'");
      }
    }
  }
  auto section = [&](const char* name) { return Section(root[name].as_table(), name); };

  Config c;
  {
    const Section s = section("model");
    c.model.kind = translate("model.kind", [&] { return train::model_kind_from_string(s.string("kind")); });
    c.model.dim = s.integer("dim");
    c.model.hidden = s.integer("hidden", c.model.hidden);
    if (s.has("curvature")) c.model.curvature = s.numbers("curvature");
    c.model.curvature_min = s.number("curvature_min", c.model.curvature_min);
    c.model.curvature_max = s.number("curvature_max", c.model.curvature_max);
    c.model.l2 = s.number("l2", c.model.l2);
    if (c.model.dim == 0) throw ConfigError("'model.dim' must be positive");
  }
  {
    const Section s = section("dataset");
    c.dataset.n_train = s.integer("n_train", c.dataset.n_train);
    c.dataset.n_eval = s.integer("n_eval", c.dataset.n_eval);
    c.dataset.task_seed = s.integer("task_seed", c.dataset.task_seed);
    c.dataset.seed = s.integer("seed", c.dataset.seed);
    c.dataset.eval_seed = s.integer("eval_seed", c.dataset.eval_seed);
    if (s.has("center_mean")) c.dataset.center_mean = s.numbers("center_mean");
    c.dataset.center_std = s.number("center_std", c.dataset.center_std);
    c.dataset.noise = s.number("noise", c.dataset.noise);
  }
  {
    const Section s = section("sgd");
    c.sgd.horizon = s.integer("T");
    c.sgd.eta.eta0 = s.number("eta");
    c.sgd.eta.kind = translate("sgd.eta_schedule", [&] {
      return train::step_size_kind_from_string(s.string("eta_schedule", "constant"));
    });
    c.sgd.batch = s.integer("batch");
    c.sgd.with_replacement = s.boolean("with_replacement", c.sgd.with_replacement);
    c.sgd.subbatches = s.integer("subbatches", c.sgd.subbatches);
    c.sgd.seed = s.integer("seed", c.sgd.seed);
    if (s.has("w_init")) c.sgd.w_init = s.numbers("w_init");
    if (c.sgd.horizon < 2) throw ConfigError("'sgd.T' must be at least 2");
    if (c.sgd.batch == 0) throw ConfigError("'sgd.batch' must be positive");
  }
  {
    const Section s = section("schedule");
    auto& sp = c.schedule;
    sp.kind = translate("schedule.kind",
                        [&] { return schedule::schedule_kind_from_string(s.string("kind", "fixed_isotropic")); });
    sp.sigma = s.number("sigma", sp.sigma);
    sp.sigma0 = s.number("sigma0", sp.sigma0);
    sp.c = s.number("c", sp.c);
    sp.beta = s.number("beta", sp.beta);
    sp.rho = s.number("rho", sp.rho);
    const std::string rs = s.string("rho_schedule", "constant");
    if (rs == "constant") {
      sp.rho_schedule = schedule::RhoSchedule::Constant;
    } else if (rs == "inv_sqrt_t") {
      sp.rho_schedule = schedule::RhoSchedule::InverseSqrtT;
    } else {
      throw ConfigError("'schedule.rho_schedule' must be \"constant\" or \"inv_sqrt_t\"");
    }
    sp.eps = s.number("eps", sp.eps);
    sp.lambda0 = s.number("lambda0", sp.lambda0);
    sp.rank = s.integer("rank", sp.rank);
    sp.stat = s.string("stat", sp.stat);
    sp.public_seed = s.integer("public_seed", sp.public_seed);
    if (s.has("covariances")) sp.covariances = s.covariances("covariances");
    sp.dim = parameter_dim(c.model);
    sp.horizon = c.sgd.horizon;
    translate("schedule", [&] {
      sp.validate();
      return 0;
    });
  }
  {
    const Section s = section("reference");
    auto& r = c.reference;
    r.mode = translate("reference.mode", [&] {
      return schedule::reference_mode_from_string(s.string("mode", "synchronized_deterministic"));
    });
    if (s.has("public_seed")) r.public_seed = s.integer("public_seed");
    r.ghost_seed = s.integer("ghost_seed", c.sgd.seed + 1);
    r.ghost_data_seed = s.integer("ghost_data_seed", c.dataset.seed + 1000);
    if (s.has("covariances")) r.covariances = s.covariances("covariances");
    if (r.mode == schedule::ReferenceMode::Explicit && r.covariances.empty()) {
      throw ConfigError("missing required key 'reference.covariances' for explicit mode");
    }
  }
  {
    const Section s = section("proxies");
    auto& p = c.proxies;
    if (s.has("checkpoints")) {
      const auto& n = s.node("checkpoints");
      if (const auto* str = n.as_string()) {
        if (str->get() != "all") throw ConfigError("'proxies.checkpoints' must be \"all\" or a list of steps");
      } else {
        c.all_checkpoints = false;
        for (double v : s.numbers("checkpoints")) {
          if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
            throw ConfigError("'proxies.checkpoints' entries must be positive integers");
          }
          p.checkpoints.push_back(static_cast<std::size_t>(v));
        }
      }
    }
    p.mc_samples = s.integer("m", p.mc_samples);
    p.mc_samples_final = s.integer("m_T", p.mc_samples_final);
    p.deviation_mode = translate("proxies.deviation_mode", [&] {
      return proxies::deviation_mode_from_string(s.string("deviation_mode", "dev"));
    });
    p.seed = s.integer("seed", p.seed);
    p.common_random_numbers = s.boolean("common_random_numbers", p.common_random_numbers);
    if (c.all_checkpoints) p.checkpoints = proxies::all_checkpoints(c.sgd.horizon);
    translate("proxies", [&] {
      p.validate(c.sgd.horizon);
      return 0;
    });
  }
  {
    const Section s = section("bound");
    auto& b = c.bound;
    b.r = s.number("R", b.r);
    if (s.has("n")) b.n = s.integer("n");
    b.variant = translate("bound.variant", [&] { return bound::bound_variant_from_string(s.string("variant", "general")); });
    const std::string pen = s.string("penalty", "raw");
    if (pen == "raw") {
      b.penalty = bound::PenaltyControl::Raw;
    } else if (pen == "smoothness") {
      b.penalty = bound::PenaltyControl::Smoothness;
    } else if (pen == "curvature") {
      b.penalty = bound::PenaltyControl::Curvature;
    } else {
      throw ConfigError("'bound.penalty' must be raw, smoothness or curvature");
    }
    b.mu = s.number("mu", b.mu);
    b.rho_train = s.number("rho_train", b.rho_train);
    b.rho_eval = s.number("rho_eval", b.rho_eval);
    if (s.has("kappa")) b.kappa = s.number("kappa");
  }
  {
    const Section s = section("output");
    c.output.trajectory = s.string("trajectory", c.output.trajectory);
    c.output.prefix = s.string("prefix", c.output.prefix);
    c.output.format = s.string("format", c.output.format);
    if (c.output.format != "csv" && c.output.format != "json") {
      throw ConfigError("'output.format' must be csv or json");
    }
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path.string());
}

void override_seed(Config& config, std::uint64_t seed) {
  config.sgd.seed = seed;
  config.proxies.seed = seed;
}

ordered_json resolved_json(const Config& c) {
  ordered_json j;
  j["model"] = train::to_json(c.model);
  j["dataset"] = train::to_json(c.dataset);
  j["sgd"] = train::to_json(c.sgd);
  j["schedule"] = proxies::to_json(c.schedule);
  ordered_json ref;
  ref["mode"] = schedule::to_string(c.reference.mode);
  ref["public_seed"] = c.reference.public_seed ? ordered_json(*c.reference.public_seed) : ordered_json(nullptr);
  ref["ghost_seed"] = c.reference.ghost_seed;
  ref["ghost_data_seed"] = c.reference.ghost_data_seed;
  ref["explicit_covariances"] = c.reference.covariances.size();
  j["reference"] = std::move(ref);
  j["proxies"] = proxies::to_json(c.proxies);
  ordered_json b;
  b["R"] = c.bound.r;
  b["n"] = c.bound.n ? ordered_json(*c.bound.n) : ordered_json(nullptr);
  b["variant"] = bound::to_string(c.bound.variant);
  b["penalty"] = bound::to_string(c.bound.penalty);
  b["mu"] = c.bound.mu;
  b["rho_train"] = c.bound.rho_train;
  b["rho_eval"] = c.bound.rho_eval;
  b["kappa"] = c.bound.kappa ? ordered_json(*c.bound.kappa) : ordered_json(nullptr);
  j["bound"] = std::move(b);
  j["output"] = {{"trajectory", c.output.trajectory}, {"prefix", c.output.prefix}, {"format", c.output.format}};
  return j;
}

std::string config_hash(const Config& config) { return io::fnv1a_hex(io::dump(resolved_json(config))); }

train::Trajectory ghost_trajectory(const Config& config) {
  train::DatasetSpec ds = config.dataset;
  ds.seed = config.reference.ghost_data_seed;
  train::SgdConfig sgd = config.sgd;
  sgd.seed = config.reference.ghost_seed;
  return train::run_sgd(train::make_problem(config.model, ds), sgd);
}

schedule::ReferenceSpec build_reference(const Config& config, const schedule::ScheduleSpec& spec) {
  using schedule::ReferenceMode;
  using schedule::ReferenceSpec;
  switch (config.reference.mode) {
    case ReferenceMode::SynchronizedDeterministic: return ReferenceSpec::synchronized_deterministic(spec);
    case ReferenceMode::SynchronizedPublic:
      return ReferenceSpec::synchronized_public(spec, config.reference.public_seed.value_or(spec.public_seed));
    case ReferenceMode::PrefixObservable: return ReferenceSpec::prefix_observable(spec);
    case ReferenceMode::Ghost:
      return ReferenceSpec::ghost(std::make_shared<const train::Trajectory>(ghost_trajectory(config)));
    case ReferenceMode::Explicit: return ReferenceSpec::explicit_list(config.reference.covariances);
  }
  throw ConfigError("unknown reference mode");
}

}  // namespace vperturb::cli
