#include "vperturb/proxies/proxies.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "vperturb/errors.hpp"
#include "vperturb/gauss/gaussian.hpp"
#include "vperturb/io/json_text.hpp"
#include "vperturb/util/parallel.hpp"

namespace vperturb::proxies {

using gauss::Matrix;
using gauss::RandomStream;
using gauss::stream_id;
using nlohmann::ordered_json;
using schedule::ReferenceCovariance;

std::string to_string(DeviationMode mode) {
  switch (mode) {
    case DeviationMode::Dev: return "dev";
    case DeviationMode::DevRef: return "dev_ref";
    case DeviationMode::Fluc: return "fluc";
    case DeviationMode::FlucRef: return "fluc_ref";
    case DeviationMode::FlucK: return "fluc_K";
  }
  return "unknown";
}

DeviationMode deviation_mode_from_string(const std::string& name) {
  for (auto m : {DeviationMode::Dev, DeviationMode::DevRef, DeviationMode::Fluc, DeviationMode::FlucRef,
                 DeviationMode::FlucK}) {
    if (to_string(m) == name) return m;
  }
  throw InputError("unknown deviation mode '" + name + "'");
}

bool uses_reference_weight(DeviationMode mode) {
  return mode == DeviationMode::DevRef || mode == DeviationMode::FlucRef;
}

namespace {

bool is_fluctuation(DeviationMode mode) {
  return mode == DeviationMode::Fluc || mode == DeviationMode::FlucRef || mode == DeviationMode::FlucK;
}

McEstimate summarize(const std::vector<double>& values) {
  McEstimate est;
  double sum = 0.0;
  for (double v : values) sum += v;
  const auto m = static_cast<double>(values.size());
  est.mean = sum / m;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    est.se = std::sqrt(ss / (m - 1.0) / m);
  }
  return est;
}

std::vector<std::size_t> sorted_checkpoints(const ProxyOptions& options) {
  std::vector<std::size_t> cps = options.checkpoints;
  std::sort(cps.begin(), cps.end());
  return cps;
}

std::pair<std::size_t, std::size_t> first_two_sizes(const train::StepRecord& rec) {
  const auto parts = train::split_batch(rec.batch, rec.g_sub.size());
  return {parts[0].size(), parts[1].size()};
}

void require_subbatches(const train::StepRecord& rec) {
  if (rec.g_sub.size() < 2) {
    throw ConfigError("fluctuation deviation modes need recorded subbatch gradients (sgd.subbatches >= 2); step " +
                      std::to_string(rec.t) + " has none");
  }
}

}  // namespace

void ProxyOptions::validate(std::size_t horizon) const {
  if (mc_samples < 1) throw InputError("proxies.m must be at least 1");
  if (mc_samples_final < 1) throw InputError("proxies.m_T must be at least 1");
  std::set<std::size_t> seen;
  for (auto t : checkpoints) {
    if (t < 1 || t + 1 > horizon) {
      throw InputError("checkpoint " + std::to_string(t) + " outside 1.." + std::to_string(horizon - 1));
    }
    if (!seen.insert(t).second) throw InputError("duplicate checkpoint " + std::to_string(t));
  }
}

std::vector<std::size_t> all_checkpoints(std::size_t horizon) {
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t < horizon; ++t) out.push_back(t);
  return out;
}

double deviation_proxy(const Vector& g_t, const Vector& g_hat, const Covariance& weight) {
  if (g_t.size() != g_hat.size()) throw InputError("deviation_proxy: gradient dimensions differ");
  return gauss::mahalanobis_sq(g_t - g_hat, weight);
}

double subbatch_scaling(std::size_t b1, std::size_t b2) {
  if (b1 == 0 || b2 == 0) throw InputError("subbatch sizes must be positive");
  if (b1 == b2) return 0.5;
  const auto x = static_cast<double>(b1);
  const auto y = static_cast<double>(b2);
  return 2.0 * x * y / ((x + y) * (x + y));
}

double fluctuation_proxy(const Vector& g1, const Vector& g2, std::size_t b1, std::size_t b2,
                         const Covariance& weight) {
  if (g1.size() != g2.size()) throw InputError("fluctuation_proxy: gradient dimensions differ");
  return subbatch_scaling(b1, b2) * gauss::mahalanobis_sq(g1 - g2, weight);
}

double fluctuation_proxy_k(std::span<const Vector> grads, const Covariance& weight) {
  if (grads.size() < 2) throw InputError("fluctuation_proxy_k needs at least 2 subbatch gradients");
  Vector mean = Vector::Zero(grads[0].size());
  for (const auto& g : grads) {
    if (g.size() != mean.size()) throw InputError("fluctuation_proxy_k: gradient dimensions differ");
    mean += g;
  }
  mean /= static_cast<double>(grads.size());
  double sum = 0.0;
  for (const auto& g : grads) sum += gauss::mahalanobis_sq(g - mean, weight);
  return sum / static_cast<double>(grads.size() - 1);
}

std::optional<McEstimate> sensitivity_proxy(const train::Model& model, const Vector& w,
                                            const Covariance& accumulated, const Covariance& weight,
                                            const train::SampleSet& eval, std::size_t m, RandomStream& rng) {
  if (m < 1) throw InputError("sensitivity_proxy needs m >= 1");
  if (eval.size() == 0) return std::nullopt;
  if (accumulated.is_zero()) return McEstimate{};
  const Matrix zeta = accumulated.sample(m, rng);
  const Vector g0 = model.grad(w, eval);
  std::vector<double> values(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Vector wp = w + zeta.row(static_cast<Eigen::Index>(j)).transpose();
    values[j] = gauss::mahalanobis_sq(model.grad(wp, eval) - g0, weight);
  }
  return summarize(values);
}

double covariance_mismatch_proxy(const Covariance& sigma_t, const ReferenceCovariance& reference) {
  if (reference.certified) return 0.0;
  return gauss::cov_compare_cost(sigma_t, reference.cov);
}

McEstimate output_sensitivity_from_draws(const train::Model& model, const Vector& w, const Matrix& zeta,
                                         const train::SampleSet& samples) {
  if (zeta.rows() < 1) throw InputError("output sensitivity needs at least one draw");
  const double base = model.loss(w, samples);
  std::vector<double> values(static_cast<std::size_t>(zeta.rows()));
  for (Eigen::Index j = 0; j < zeta.rows(); ++j) {
    const Vector wp = w + zeta.row(j).transpose();
    const double lp = model.loss(wp, samples);
    if (!std::isfinite(lp)) throw RunError("non-finite perturbed loss in output sensitivity");
    values[static_cast<std::size_t>(j)] = base - lp;
  }
  return summarize(values);
}

McEstimate output_sensitivity_proxy(const train::Model& model, const Vector& w, const Covariance& accumulated,
                                    const train::SampleSet& samples, std::size_t m, RandomStream& rng) {
  if (m < 1) throw InputError("output sensitivity needs m_T >= 1");
  if (accumulated.is_zero()) return McEstimate{};
  return output_sensitivity_from_draws(model, w, accumulated.sample(m, rng), samples);
}

double penalty_difference(double delta_eval, double delta_train) { return std::abs(delta_eval - delta_train); }

double assemble_summary(std::span<const CheckpointProxies> checkpoints, const std::optional<double>& r_hat,
                        double coefficient) {
  double total = 0.0;
  for (const auto& c : checkpoints) {
    const double gamma = c.gamma_hat ? *c.gamma_hat : 0.0;
    total += coefficient * c.eta * c.eta * (c.v_hat + gamma) + c.c_hat;
  }
  if (r_hat) total += *r_hat;
  return total;
}

//---------------------------------------------------------------------------//
// Algorithm 1
//---------------------------------------------------------------------------//

namespace {

void check_inputs(const train::Problem& problem, const train::Trajectory& traj, const ProxyOptions& options) {
  if (traj.steps.empty()) throw InputError("trajectory has no steps");
  if (traj.meta.dim != problem.dim()) throw InputError("trajectory dimension differs from the model dimension");
  options.validate(traj.horizon());
}

void finish_terminal(ProxyReport& report, const train::Problem& problem, const train::Trajectory& traj,
                     const Covariance& accumulated_final, const ProxyOptions& options) {
  const Vector w_final = traj.final_iterate();
  report.tr_sigma_final = accumulated_final.trace();
  const auto& model = *problem.model;
  if (accumulated_final.is_zero()) {
    report.delta_train = McEstimate{};
    if (problem.eval.size()) report.delta_eval = McEstimate{};
  } else {
    RandomStream rng(options.seed, stream_id({kOutputStream}));
    const Matrix zeta = accumulated_final.sample(options.mc_samples_final, rng);
    report.delta_train = output_sensitivity_from_draws(model, w_final, zeta, problem.train);
    if (problem.eval.size()) {
      if (options.common_random_numbers) {
        report.delta_eval = output_sensitivity_from_draws(model, w_final, zeta, problem.eval);
      } else {
        RandomStream rng_eval(options.seed, stream_id({kOutputEvalStream}));
        report.delta_eval = output_sensitivity_from_draws(
            model, w_final, accumulated_final.sample(options.mc_samples_final, rng_eval), problem.eval);
      }
    }
  }
  if (report.delta_eval) {
    report.r_hat = penalty_difference(report.delta_eval->mean, report.delta_train.mean);
  } else {
    report.notes.push_back("output penalty difference not computed: no evaluation data; R_hat excluded from B_hat");
  }
}

}  // namespace

ScheduleReplay replay_schedule(const train::Trajectory& traj, const schedule::ScheduleSpec& schedule_spec,
                               const schedule::ReferenceSpec& reference, std::uint64_t seed) {
  const std::size_t horizon = traj.horizon();
  if (schedule_spec.horizon != horizon) throw InputError("schedule horizon differs from the trajectory horizon");
  if (schedule_spec.dim != traj.meta.dim) throw InputError("schedule dimension differs from the trajectory dimension");
  const bool virtual_stat = schedule_spec.kind == schedule::ScheduleKind::AdaptiveScalar &&
                            schedule_spec.stat == schedule::kVirtualStepSqEma;
  schedule::Schedule sched(schedule_spec);
  schedule::ReferenceTracker tracker(reference, schedule_spec);
  std::vector<ReplayedStep> steps;
  steps.reserve(horizon - 1);
  std::vector<Vector> virtual_path;
  Vector xi = Vector::Zero(static_cast<Eigen::Index>(traj.meta.dim));
  RandomStream virtual_rng(seed, stream_id({kVirtualPathStream}));
  if (virtual_stat) virtual_path.push_back(traj.iterate(1));

  // Sigma_t from H_{t-1}, then the reference, then fold in G_t.
  for (std::size_t t = 1; t < horizon; ++t) {
    const auto view = schedule::make_history_view(traj, t, virtual_path);
    Covariance sigma = sched.next_covariance(view);
    ReferenceCovariance ref = tracker.at(t, sigma);
    steps.push_back(ReplayedStep{sigma, ref, sched.accumulated()});
    if (virtual_stat) {
      xi += sigma.sample(1, virtual_rng).row(0).transpose();
      virtual_path.push_back(traj.iterate(t + 1) + xi);
    }
    sched.advance(sigma, traj.steps[t - 1].g);
  }
  return ScheduleReplay{std::move(steps), sched.accumulated()};
}

ProxyReport run_algorithm1(const train::Problem& problem, const train::Trajectory& traj,
                           const schedule::ScheduleSpec& schedule_spec, const schedule::ReferenceSpec& reference,
                           const ProxyOptions& options) {
  check_inputs(problem, traj, options);
  const DeviationMode mode = options.deviation_mode;
  const bool have_eval = problem.eval.size() > 0;
  const bool analytic_mean = problem.center_mean.has_value();
  if ((mode == DeviationMode::Dev || mode == DeviationMode::DevRef) && !have_eval && !analytic_mean) {
    throw ConfigError("deviation mode '" + to_string(mode) + "' needs evaluation data for the population gradient");
  }

  ProxyReport report;
  report.options = options;
  report.options.checkpoints = sorted_checkpoints(options);
  report.schedule_kind = schedule::to_string(schedule_spec.kind);
  report.reference_mode = schedule::to_string(reference.mode());
  report.certificate = schedule::to_string(reference.certificate());
  report.population_gradient_analytic = analytic_mean;

  const ScheduleReplay replay = replay_schedule(traj, schedule_spec, reference, options.seed);
  const auto& states = replay.steps;
  const Covariance& accumulated_final = replay.accumulated_final;

  // Checkpoints fan out; each owns the stream (seed, t).
  const auto& cps = report.options.checkpoints;
  report.checkpoints.resize(cps.size());
  const auto& model = *problem.model;
  util::parallel_for(cps.size(), [&](std::size_t i) {
    const std::size_t t = cps[i];
    const auto& st = states[t - 1];
    const auto& rec = traj.steps[t - 1];
    const Covariance& weight = uses_reference_weight(mode) ? st.reference.cov : st.sigma;

    CheckpointProxies out;
    out.t = t;
    out.eta = rec.eta;
    out.v_mode = mode;
    switch (mode) {
      case DeviationMode::Dev:
      case DeviationMode::DevRef:
        out.v_hat = deviation_proxy(rec.g, train::population_gradient(problem, rec.w).value, weight);
        break;
      case DeviationMode::Fluc:
      case DeviationMode::FlucRef: {
        require_subbatches(rec);
        const auto [b1, b2] = first_two_sizes(rec);
        out.v_hat = fluctuation_proxy(rec.g_sub[0], rec.g_sub[1], b1, b2, weight);
        break;
      }
      case DeviationMode::FlucK:
        require_subbatches(rec);
        out.v_hat = fluctuation_proxy_k(rec.g_sub, weight);
        break;
    }
    RandomStream rng(options.seed, stream_id({kSensitivityStream, t}));
    if (auto gamma = sensitivity_proxy(model, rec.w, st.accumulated, weight, problem.eval, options.mc_samples, rng)) {
      out.gamma_hat = gamma->mean;
      out.gamma_se = gamma->se;
    }
    out.certified = st.reference.certified;
    out.c_hat = covariance_mismatch_proxy(st.sigma, st.reference);
    out.kappa = st.reference.certified ? 1.0 : gauss::comparability_kappa(st.sigma, st.reference.cov);
    out.tr_sigma_t = st.sigma.trace();
    out.tr_sigma_1t = st.accumulated.trace();
    report.checkpoints[i] = out;
  });

  if (!have_eval) {
    report.notes.push_back("gradient-sensitivity proxy not computed: no evaluation data; Gamma_hat excluded from B_hat");
  }
  if (is_fluctuation(mode) && mode != DeviationMode::FlucK) {
    for (std::size_t t : cps) {
      const auto [b1, b2] = first_two_sizes(traj.steps[t - 1]);
      if (b1 != b2) {
        report.notes.push_back("unequal subbatch sizes scaled by 2*b1*b2/(b1+b2)^2");
        break;
      }
    }
  }
  finish_terminal(report, problem, traj, accumulated_final, options);
  report.b_hat = assemble_summary(report.checkpoints, report.r_hat, 2.0);
  report.b_hat_sharp = assemble_summary(report.checkpoints, report.r_hat, 1.0);
  return report;
}

//---------------------------------------------------------------------------//
// Fixed isotropic path
//---------------------------------------------------------------------------//

ProxyReport run_fixed_isotropic(const train::Problem& problem, const train::Trajectory& traj, double sigma,
                                const ProxyOptions& options) {
  check_inputs(problem, traj, options);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be positive");
  const DeviationMode mode = options.deviation_mode;
  if (mode == DeviationMode::FlucK) throw InputError("fixed isotropic path supports dev and fluc modes");
  const bool have_eval = problem.eval.size() > 0;
  if ((mode == DeviationMode::Dev || mode == DeviationMode::DevRef) && !have_eval && !problem.center_mean) {
    throw ConfigError("deviation mode '" + to_string(mode) + "' needs evaluation data for the population gradient");
  }

  const std::size_t horizon = traj.horizon();
  const auto d = static_cast<Eigen::Index>(traj.meta.dim);
  const double s2 = sigma * sigma;
  // tau2[t-1] = sigma^2 (t - 1), built by repeated addition.
  std::vector<double> tau2(horizon, 0.0);
  for (std::size_t t = 2; t <= horizon; ++t) tau2[t - 1] = tau2[t - 2] + s2;

  ProxyReport report;
  report.options = options;
  report.options.checkpoints = sorted_checkpoints(options);
  report.schedule_kind = "fixed_isotropic";
  report.reference_mode = "synchronized_deterministic";
  report.certificate = "deterministic";
  report.population_gradient_analytic = problem.center_mean.has_value();

  const auto& model = *problem.model;
  const auto& cps = report.options.checkpoints;
  report.checkpoints.resize(cps.size());
  util::parallel_for(cps.size(), [&](std::size_t i) {
    const std::size_t t = cps[i];
    const auto& rec = traj.steps[t - 1];
    CheckpointProxies out;
    out.t = t;
    out.eta = rec.eta;
    out.v_mode = mode;
    if (mode == DeviationMode::Dev || mode == DeviationMode::DevRef) {
      const Vector diff = rec.g - train::population_gradient(problem, rec.w).value;
      out.v_hat = diff.squaredNorm() / s2;
    } else {
      require_subbatches(rec);
      const auto [b1, b2] = first_two_sizes(rec);
      out.v_hat = subbatch_scaling(b1, b2) * ((rec.g_sub[0] - rec.g_sub[1]).squaredNorm() / s2);
    }
    if (have_eval) {
      if (tau2[t - 1] == 0.0) {
        out.gamma_hat = 0.0;
      } else {
        RandomStream rng(options.seed, stream_id({kSensitivityStream, t}));
        const double tau = std::sqrt(tau2[t - 1]);
        Matrix zeta(static_cast<Eigen::Index>(options.mc_samples), d);
        for (Eigen::Index j = 0; j < zeta.rows(); ++j)
          for (Eigen::Index k = 0; k < d; ++k) zeta(j, k) = tau * rng.normal();
        const Vector g0 = model.grad(rec.w, problem.eval);
        std::vector<double> values(options.mc_samples);
        for (std::size_t j = 0; j < options.mc_samples; ++j) {
          const Vector wp = rec.w + zeta.row(static_cast<Eigen::Index>(j)).transpose();
          values[j] = (model.grad(wp, problem.eval) - g0).squaredNorm() / s2;
        }
        const McEstimate est = summarize(values);
        out.gamma_hat = est.mean;
        out.gamma_se = est.se;
      }
    }
    out.certified = true;
    out.c_hat = 0.0;
    out.kappa = 1.0;
    out.tr_sigma_t = static_cast<double>(d) * s2;
    out.tr_sigma_1t = static_cast<double>(d) * tau2[t - 1];
    report.checkpoints[i] = out;
  });
  if (!have_eval) {
    report.notes.push_back("gradient-sensitivity proxy not computed: no evaluation data; Gamma_hat excluded from B_hat");
  }

  finish_terminal(report, problem, traj, Covariance::isotropic(traj.meta.dim, tau2[horizon - 1]), options);

  double b = 0.0;
  double b_sharp = 0.0;
  for (const auto& c : report.checkpoints) {
    const double terms = c.v_hat + (c.gamma_hat ? *c.gamma_hat : 0.0);
    b += 2.0 * c.eta * c.eta * terms + c.c_hat;
    b_sharp += 1.0 * c.eta * c.eta * terms + c.c_hat;
  }
  if (report.r_hat) {
    b += *report.r_hat;
    b_sharp += *report.r_hat;
  }
  report.b_hat = b;
  report.b_hat_sharp = b_sharp;
  return report;
}

//---------------------------------------------------------------------------//
// Serialization
//---------------------------------------------------------------------------//

void write_csv(const ProxyReport& report, std::ostream& out,
               const std::vector<std::pair<std::string, std::string>>& metadata) {
  for (const auto& [k, v] : metadata) out << "# " << k << ": " << v << '\n';
  out << "t,V_hat,V_mode,Gamma_hat,C_hat,tr_sigma_t,tr_sigma_1t,eta\n";
  for (const auto& c : report.checkpoints) {
    out << c.t << ',' << io::format_double(c.v_hat) << ',' << io::csv_field(to_string(c.v_mode)) << ','
        << (c.gamma_hat ? io::format_double(*c.gamma_hat) : std::string()) << ',' << io::format_double(c.c_hat)
        << ',' << io::format_double(c.tr_sigma_t) << ',' << io::format_double(c.tr_sigma_1t) << ','
        << io::format_double(c.eta) << '\n';
  }
}

ordered_json to_json(const ProxyOptions& options) {
  ordered_json j;
  j["checkpoints"] = options.checkpoints;
  j["m"] = options.mc_samples;
  j["m_T"] = options.mc_samples_final;
  j["deviation_mode"] = to_string(options.deviation_mode);
  j["seed"] = options.seed;
  j["common_random_numbers"] = options.common_random_numbers;
  return j;
}

ordered_json to_json(const schedule::ScheduleSpec& spec) {
  ordered_json j;
  j["kind"] = schedule::to_string(spec.kind);
  j["dim"] = spec.dim;
  j["horizon"] = spec.horizon;
  j["dependence"] = schedule::to_string(spec.dependence());
  switch (spec.kind) {
    case schedule::ScheduleKind::FixedIsotropic: j["sigma"] = spec.sigma; break;
    case schedule::ScheduleKind::FixedDense: {
      ordered_json list = ordered_json::array();
      for (const auto& c : spec.covariances) {
        const Matrix m = c.materialize();
        ordered_json rows = ordered_json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          ordered_json row = ordered_json::array();
          for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
          rows.push_back(std::move(row));
        }
        list.push_back(std::move(rows));
      }
      j["covariances"] = std::move(list);
      break;
    }
    case schedule::ScheduleKind::AdaptiveScalar:
      j["sigma0"] = spec.sigma0;
      j["c"] = spec.c;
      j["stat"] = spec.stat;
      if (spec.stat == schedule::kPublicStat) j["public_seed"] = spec.public_seed;
      break;
    case schedule::ScheduleKind::AdaptiveDiagonal:
      j["sigma0"] = spec.sigma0;
      j["c"] = spec.c;
      j["beta"] = spec.beta;
      break;
    case schedule::ScheduleKind::AdamProportional:
    case schedule::ScheduleKind::AdamInverse:
      j["beta"] = spec.beta;
      j["rho"] = spec.rho;
      j["rho_schedule"] = spec.rho_schedule == schedule::RhoSchedule::Constant ? "constant" : "inv_sqrt_t";
      j["eps"] = spec.eps;
      j["lambda0"] = spec.lambda0;
      break;
    case schedule::ScheduleKind::LowRankRidge:
      j["rho"] = spec.rho;
      j["rho_schedule"] = spec.rho_schedule == schedule::RhoSchedule::Constant ? "constant" : "inv_sqrt_t";
      j["lambda0"] = spec.lambda0;
      j["rank"] = spec.rank;
      break;
  }
  return j;
}

ordered_json to_json(const ProxyReport& report) {
  ordered_json j;
  j["delta_train"] = report.delta_train.mean;
  j["delta_train_se"] = report.delta_train.se;
  if (report.delta_eval) {
    j["delta_eval"] = report.delta_eval->mean;
    j["delta_eval_se"] = report.delta_eval->se;
  } else {
    j["delta_eval"] = nullptr;
    j["delta_eval_se"] = nullptr;
  }
  j["R_hat"] = report.r_hat ? ordered_json(*report.r_hat) : ordered_json(nullptr);
  j["B_hat"] = report.b_hat;
  j["B_hat_sharp"] = report.b_hat_sharp;
  j["tr_sigma_final"] = report.tr_sigma_final;
  j["schedule_kind"] = report.schedule_kind;
  j["reference"] = {{"mode", report.reference_mode}, {"certificate", report.certificate}};
  j["population_gradient"] = report.population_gradient_analytic ? "analytic" : "eval_proxy";
  j["subbatch_scaling"] = "2*b1*b2/(b1+b2)^2";
  j["estimator"] = "single_trajectory_proxy";
  j["options"] = to_json(report.options);
  ordered_json cps = ordered_json::array();
  for (const auto& c : report.checkpoints) {
    ordered_json r;
    r["t"] = c.t;
    r["eta"] = c.eta;
    r["V_hat"] = c.v_hat;
    r["V_mode"] = to_string(c.v_mode);
    r["Gamma_hat"] = c.gamma_hat ? ordered_json(*c.gamma_hat) : ordered_json(nullptr);
    r["Gamma_se"] = c.gamma_se;
    r["C_hat"] = c.c_hat;
    r["certified"] = c.certified;
    r["kappa"] = c.kappa;
    r["tr_sigma_t"] = c.tr_sigma_t;
    r["tr_sigma_1t"] = c.tr_sigma_1t;
    cps.push_back(std::move(r));
  }
  j["checkpoints"] = std::move(cps);
  j["notes"] = report.notes;
  return j;
}

}  // namespace vperturb::proxies
