#include "vperturb/cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "vperturb/bound/bound.hpp"
#include "vperturb/cli/config.hpp"
#include "vperturb/errors.hpp"
#include "vperturb/io/json_text.hpp"
#include "vperturb/proxies/proxies.hpp"
#include "vperturb/train/trajectory_io.hpp"
#include "vperturb/verify/suite.hpp"

namespace vperturb::cli {

using nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const AdmissibilityError*>(&e) ||
      dynamic_cast<const InputError*>(&e)) {
    return kExitConfig;
  }
  return kExitData;
}

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed_override;
  std::string out;
  std::string format;
};

Config load(const GlobalFlags& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  Config c = load_config(g.config);
  if (g.seed_override) override_seed(c, *g.seed_override);
  if (!g.format.empty()) c.output.format = g.format;
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

ordered_json seeds_json(const Config& c) {
  return {{"task_seed", c.dataset.task_seed},   {"dataset_seed", c.dataset.seed},
          {"eval_seed", c.dataset.eval_seed},   {"sgd_seed", c.sgd.seed},
          {"proxies_seed", c.proxies.seed},     {"ghost_seed", c.reference.ghost_seed},
          {"ghost_data_seed", c.reference.ghost_data_seed}};
}

std::vector<std::pair<std::string, std::string>> csv_metadata(const Config& c, const std::string& traj_hash) {
  return {{"tool_version", kToolVersion},
          {"config_hash", config_hash(c)},
          {"trajectory_hash", traj_hash},
          {"seeds", io::dump(seeds_json(c))},
          {"config", io::dump(resolved_json(c))}};
}

// A trajectory is usable with a config when it was produced by the same
// model, data and optimizer settings.
train::Trajectory load_compatible(const Config& c, const std::string& path) {
  train::Trajectory traj = train::load_trajectory(path);
  if (traj.meta.dim != parameter_dim(c.model)) {
    throw FormatError("trajectory dimension " + std::to_string(traj.meta.dim) + " differs from the model dimension " +
                      std::to_string(parameter_dim(c.model)));
  }
  if (!(traj.meta.model == c.model) || !(traj.meta.dataset == c.dataset) || !(traj.meta.sgd == c.sgd)) {
    throw FormatError("trajectory '" + path + "' was recorded with a different model, dataset or sgd section");
  }
  return traj;
}

train::Trajectory train_from(const Config& c) {
  const train::Problem problem = train::make_problem(c.model, c.dataset);
  train::Trajectory traj = train::run_sgd(problem, c.sgd);
  traj.meta.tool_version = kToolVersion;
  traj.meta.config_hash = config_hash(c);
  return traj;
}

// ------------------------------------------------------------------ train

int cmd_train(const GlobalFlags& g, std::ostream& out) {
  const Config c = load(g);
  const train::Trajectory traj = train_from(c);
  const std::string path = g.out.empty() ? c.output.trajectory : g.out;
  train::save_trajectory(traj, path);
  out << "wrote " << path << " (" << traj.horizon() << " iterates, hash " << train::trajectory_hash(traj) << ")\n";
  return kExitOk;
}

// --------------------------------------------------------------- diagnose

int cmd_diagnose(const GlobalFlags& g, const std::string& traj_flag, std::ostream& out) {
  const Config c = load(g);
  const std::string traj_path = traj_flag.empty() ? c.output.trajectory : traj_flag;
  const train::Trajectory traj = load_compatible(c, traj_path);
  const train::Problem problem = train::make_problem(c.model, c.dataset);
  const auto ref = build_reference(c, c.schedule);
  const proxies::ProxyReport report = proxies::run_algorithm1(problem, traj, c.schedule, ref, c.proxies);
  const std::string thash = train::trajectory_hash(traj);

  ordered_json summary;
  summary["tool_version"] = kToolVersion;
  summary["config_hash"] = config_hash(c);
  summary["trajectory_hash"] = thash;
  summary["seeds"] = seeds_json(c);
  summary["config"] = resolved_json(c);
  summary["n_train"] = problem.train.size();
  const gauss::Vector w_final = traj.final_iterate();
  summary["w_final"] = std::vector<double>(w_final.data(), w_final.data() + w_final.size());
  summary["report"] = proxies::to_json(report);

  const std::string prefix = g.out.empty() ? c.output.prefix : g.out;
  const std::string json_path = prefix + ".json";
  write_file(json_path, io::dump_pretty(summary) + "\n");
  out << "wrote " << json_path << "\n";
  if (c.output.format == "csv") {
    std::ostringstream os;
    proxies::write_csv(report, os, csv_metadata(c, thash));
    write_file(prefix + ".csv", os.str());
    out << "wrote " << prefix << ".csv\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------------ bound

double number_or(const ordered_json& j, const char* key, double fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_number()) throw FormatError(std::string("summary field '") + key + "' is not a number");
  return j[key].get<double>();
}

int cmd_bound(const GlobalFlags& g, const std::string& summary_path, const std::string& traj_flag,
              const std::string& variant_flag, std::ostream& out) {
  ordered_json summary;
  try {
    summary = ordered_json::parse(read_file(summary_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("cannot parse summary '" + summary_path + "': " + e.what());
  }
  if (!summary.contains("report") || !summary.contains("config")) {
    throw FormatError("'" + summary_path + "' is not a diagnose summary");
  }
  const ordered_json& report = summary["report"];

  std::optional<Config> config;
  if (!g.config.empty()) config = load(g);
  const ordered_json bcfg = config ? resolved_json(*config)["bound"] : summary["config"]["bound"];

  bound::BoundInputs in;
  in.r = number_or(bcfg, "R", 1.0);
  in.n = bcfg.contains("n") && !bcfg["n"].is_null() ? bcfg["n"].get<std::size_t>()
                                                     : summary.at("n_train").get<std::size_t>();
  std::vector<std::string> notes;
  double max_kappa = 1.0;
  for (const auto& cp : report.at("checkpoints")) {
    bound::StepTerms s;
    s.eta = cp.at("eta").get<double>();
    s.ev = cp.at("V_hat").get<double>();
    s.egamma = number_or(cp, "Gamma_hat", 0.0);
    s.c = cp.at("C_hat").get<double>();
    max_kappa = std::max(max_kappa, number_or(cp, "kappa", 1.0));
    in.steps.push_back(s);
  }

  const std::string variant_name = variant_flag.empty() ? bcfg.at("variant").get<std::string>() : variant_flag;
  const bound::BoundVariant variant = [&] {
    try {
      return bound::bound_variant_from_string(variant_name);
    } catch (const InputError& e) {
      throw ConfigError(std::string("--variant: ") + e.what());
    }
  }();
  if (variant == bound::BoundVariant::Synchronized) {
    for (std::size_t i = 0; i < in.steps.size(); ++i) {
      if (in.steps[i].c != 0.0) {
        throw AdmissibilityError("synchronized bound requested but checkpoint t=" +
                                 report.at("checkpoints")[i].at("t").dump() +
                                 " has a nonzero covariance-comparison cost; use variant general or comparable");
      }
    }
  }

  const std::string penalty = bcfg.at("penalty").get<std::string>();
  if (penalty == "raw") {
    in.penalty_control = bound::PenaltyControl::Raw;
    if (report.at("R_hat").is_null()) {
      notes.push_back("no evaluation data: penalty difference unavailable and set to 0");
    }
    in.r_delta = number_or(report, "R_hat", 0.0);
  } else if (penalty == "smoothness") {
    in.penalty_control = bound::PenaltyControl::Smoothness;
    in.r_delta = bound::smoothness_penalty(number_or(bcfg, "mu", 0.0), report.at("tr_sigma_final").get<double>());
    notes.push_back("smoothness control uses the single-trajectory Tr(Sigma_{1:T})");
  } else if (penalty == "curvature") {
    in.penalty_control = bound::PenaltyControl::Curvature;
    if (!config) throw ConfigError("curvature penalty needs --config and --trajectory");
    const std::string traj_path = traj_flag.empty() ? config->output.trajectory : traj_flag;
    const train::Trajectory traj = load_compatible(*config, traj_path);
    if (train::trajectory_hash(traj) != summary.value("trajectory_hash", std::string())) {
      throw FormatError("trajectory hash differs from the one recorded in the summary");
    }
    const train::Problem problem = train::make_problem(config->model, config->dataset);
    if (problem.eval.size() == 0) throw ConfigError("curvature penalty needs evaluation data (dataset.n_eval > 0)");
    const auto ref = build_reference(*config, config->schedule);
    const auto replay = proxies::replay_schedule(traj, config->schedule, ref, config->proxies.seed);
    const gauss::Vector w = traj.final_iterate();
    const auto& model = *problem.model;
    auto h_train = [&](const gauss::Vector& v) { return model.hvp(w, v, problem.train); };
    auto h_eval = [&](const gauss::Vector& v) { return model.hvp(w, v, problem.eval); };
    in.r_delta = bound::curvature_mismatch_penalty(h_train, h_eval, replay.accumulated_final, config->bound.rho_train,
                                                   config->bound.rho_eval);
  } else {
    throw FormatError("unknown penalty control '" + penalty + "'");
  }

  if (variant == bound::BoundVariant::Comparable) {
    in.kappa = bcfg.contains("kappa") && !bcfg["kappa"].is_null() ? bcfg["kappa"].get<double>() : max_kappa;
  }
  const bound::BoundReport br = bound::assemble(variant, in);

  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = summary.value("config_hash", std::string());
  j["trajectory_hash"] = summary.value("trajectory_hash", std::string());
  j["seeds"] = summary.value("seeds", ordered_json::object());
  j["summary"] = summary_path;
  j["R"] = in.r;
  j["n"] = in.n;
  if (in.kappa) j["kappa"] = *in.kappa;
  j["bound"] = bound::to_json(br);
  j["notes"] = notes;

  std::string text;
  if (g.format == "csv") {
    std::ostringstream os;
    os << "# tool_version: " << kToolVersion << "\n# config_hash: " << j["config_hash"].get<std::string>()
       << "\n# trajectory_hash: " << j["trajectory_hash"].get<std::string>() << "\n";
    os << "variant,penalty_control,info_term,cov_term_sum,sqrt_term,penalty,total\n";
    os << bound::to_string(br.variant) << ',' << bound::to_string(br.penalty_control) << ','
       << io::format_double(br.info_term) << ',' << io::format_double(br.cov_term_sum) << ','
       << io::format_double(br.sqrt_term) << ',' << io::format_double(br.penalty) << ','
       << io::format_double(br.total) << '\n';
    text = os.str();
  } else {
    text = io::dump_pretty(j) + "\n";
  }
  if (g.out.empty()) {
    out << text;
  } else {
    write_file(g.out, text);
  }
  return kExitOk;
}

// ----------------------------------------------------------------- verify

int cmd_verify(const GlobalFlags& g, std::size_t sweep, std::ostream& out) {
  verify::SuiteOptions opts;
  opts.seed = g.seed_override.value_or(0);
  opts.sweep = sweep;
  const auto results = verify::run_suite(opts);
  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = opts.seed;
  j["sweep"] = opts.sweep;
  const auto report = verify::to_json(results);
  j["passed"] = report["passed"];
  j["checks"] = report["checks"];
  const std::string text = io::dump_pretty(j) + "\n";
  if (g.out.empty()) {
    out << text;
  } else {
    write_file(g.out, text);
  }
  return verify::all_passed(results) ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------- compare

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

int cmd_compare(const GlobalFlags& g, const std::string& schedules, const std::string& traj_flag, std::ostream& out) {
  const Config c = load(g);
  const auto kinds = split_list(schedules);
  if (kinds.empty()) throw ConfigError("--schedules needs at least one schedule kind");
  const train::Trajectory traj = traj_flag.empty() ? train_from(c) : load_compatible(c, traj_flag);
  const train::Problem problem = train::make_problem(c.model, c.dataset);
  const std::string thash = train::trajectory_hash(traj);

  std::optional<schedule::ReferenceSpec> ghost;
  ordered_json rows = ordered_json::array();
  for (const auto& name : kinds) {
    schedule::ScheduleSpec spec = c.schedule;
    try {
      spec.kind = schedule::schedule_kind_from_string(name);
      spec.validate();
    } catch (const InputError& e) {
      throw ConfigError("schedule '" + name + "': " + e.what());
    }
    std::optional<schedule::ReferenceSpec> ref;
    try {
      ref = build_reference(c, spec);
    } catch (const AdmissibilityError&) {
      if (!ghost) ghost = schedule::ReferenceSpec::ghost(std::make_shared<const train::Trajectory>(ghost_trajectory(c)));
      ref = *ghost;
    }
    const auto report = proxies::run_algorithm1(problem, traj, spec, *ref, c.proxies);
    double dev = 0.0, sens = 0.0, cost = 0.0;
    for (const auto& cp : report.checkpoints) {
      dev += 2.0 * cp.eta * cp.eta * cp.v_hat;
      sens += 2.0 * cp.eta * cp.eta * cp.gamma_hat.value_or(0.0);
      cost += cp.c_hat;
    }
    ordered_json row;
    row["schedule"] = name;
    row["reference"] = report.reference_mode;
    row["certificate"] = report.certificate;
    row["trajectory_hash"] = thash;
    row["dev_sum"] = dev;
    row["sens_sum"] = sens;
    row["cost_sum"] = cost;
    row["R_hat"] = report.r_hat ? ordered_json(*report.r_hat) : ordered_json(nullptr);
    row["B_hat"] = report.b_hat;
    row["B_hat_sharp"] = report.b_hat_sharp;
    rows.push_back(std::move(row));
  }

  std::string text;
  if (c.output.format == "json") {
    ordered_json j;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = config_hash(c);
    j["trajectory_hash"] = thash;
    j["seeds"] = seeds_json(c);
    j["config"] = resolved_json(c);
    j["rows"] = std::move(rows);
    text = io::dump_pretty(j) + "\n";
  } else {
    std::ostringstream os;
    for (const auto& [k, v] : csv_metadata(c, thash)) os << "# " << k << ": " << v << '\n';
    os << "schedule,reference,certificate,trajectory_hash,dev_sum,sens_sum,cost_sum,R_hat,B_hat,B_hat_sharp\n";
    for (const auto& r : rows) {
      os << io::csv_field(r["schedule"].get<std::string>()) << ',' << io::csv_field(r["reference"].get<std::string>())
         << ',' << io::csv_field(r["certificate"].get<std::string>()) << ',' << thash << ','
         << io::format_double(r["dev_sum"].get<double>()) << ',' << io::format_double(r["sens_sum"].get<double>())
         << ',' << io::format_double(r["cost_sum"].get<double>()) << ','
         << (r["R_hat"].is_null() ? std::string() : io::format_double(r["R_hat"].get<double>())) << ','
         << io::format_double(r["B_hat"].get<double>()) << ',' << io::format_double(r["B_hat_sharp"].get<double>())
         << '\n';
    }
    text = os.str();
  }
  if (g.out.empty()) {
    out << text;
  } else {
    write_file(g.out, text);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive virtual-perturbation diagnostics for SGD", "vperturb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GlobalFlags g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "TOML configuration file");
  auto* seed_opt = app.add_option("--seed-override", seed, "replace sgd.seed and proxies.seed");
  app.add_option("--out", g.out, "output path (train, bound, verify, compare) or prefix (diagnose)");
  app.add_option("--format", g.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  auto* train_cmd = app.add_subcommand("train", "run SGD and record the trajectory")->fallthrough();

  std::string traj_path;
  auto* diag_cmd = app.add_subcommand("diagnose", "proxy diagnostics on a recorded trajectory")->fallthrough();
  diag_cmd->add_option("--trajectory", traj_path, "trajectory file (default: output.trajectory)");

  std::string summary_path, variant;
  auto* bound_cmd = app.add_subcommand("bound", "assemble a bound from a diagnose summary")->fallthrough();
  bound_cmd->add_option("--summary", summary_path, "summary JSON written by diagnose")->required();
  bound_cmd->add_option("--trajectory", traj_path, "trajectory file, needed for the curvature penalty");
  bound_cmd->add_option("--variant", variant, "general, synchronized or comparable");

  std::size_t sweep = 100;
  auto* verify_cmd = app.add_subcommand("verify", "run the oracle verification suite")->fallthrough();
  verify_cmd->add_option("--sweep", sweep, "configurations per randomized sweep")->check(CLI::PositiveNumber);

  std::string schedules;
  auto* compare_cmd = app.add_subcommand("compare", "replay one trajectory under several schedules")->fallthrough();
  compare_cmd->add_option("--schedules", schedules, "comma-separated schedule kinds")->required();
  compare_cmd->add_option("--trajectory", traj_path, "trajectory file (default: train from the config)");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed_opt->count()) g.seed_override = seed;

  try {
    if (train_cmd->parsed()) return cmd_train(g, out);
    if (diag_cmd->parsed()) return cmd_diagnose(g, traj_path, out);
    if (bound_cmd->parsed()) return cmd_bound(g, summary_path, traj_path, variant, out);
    if (verify_cmd->parsed()) return cmd_verify(g, sweep, out);
    if (compare_cmd->parsed()) return cmd_compare(g, schedules, traj_path, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitConfig;
}

}  // namespace vperturb::cli
