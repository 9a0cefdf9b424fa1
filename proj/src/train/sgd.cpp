#include "vperturb/train/sgd.hpp"

#include <algorithm>
#include <cmath>

#include "vperturb/errors.hpp"
#include "vperturb/gauss/random.hpp"

namespace vperturb::train {

double StepSize::at(std::size_t t) const {
  if (t == 0) throw InputError("step index starts at 1");
  switch (kind) {
    case Kind::Constant: return eta0;
    case Kind::InverseT: return eta0 / static_cast<double>(t);
  }
  return eta0;
}

std::string to_string(StepSize::Kind kind) {
  return kind == StepSize::Kind::Constant ? "constant" : "inv_t";
}

StepSize::Kind step_size_kind_from_string(const std::string& name) {
  if (name == "constant") return StepSize::Kind::Constant;
  if (name == "inv_t") return StepSize::Kind::InverseT;
  throw InputError("unknown step-size schedule '" + name + "'");
}

bool operator==(const StepRecord& a, const StepRecord& b) {
  if (a.t != b.t || a.eta != b.eta || a.batch != b.batch || a.loss_train != b.loss_train ||
      a.loss_eval != b.loss_eval || a.g_sub.size() != b.g_sub.size()) {
    return false;
  }
  if (a.w.size() != b.w.size() || a.w != b.w || a.g.size() != b.g.size() || a.g != b.g) return false;
  for (std::size_t k = 0; k < a.g_sub.size(); ++k) {
    if (a.g_sub[k].size() != b.g_sub[k].size() || a.g_sub[k] != b.g_sub[k]) return false;
  }
  return true;
}

bool operator==(const Trajectory& a, const Trajectory& b) {
  return a.meta == b.meta && a.steps == b.steps;
}

Vector Trajectory::iterate(std::size_t t) const {
  if (t == 0 || t > horizon()) throw InputError("iterate index out of range");
  if (steps.empty()) throw InputError("trajectory has no steps");
  if (t <= steps.size()) return steps[t - 1].w;
  return final_iterate();
}

Vector Trajectory::final_iterate() const {
  if (steps.empty()) throw InputError("trajectory has no steps");
  const auto& last = steps.back();
  return last.w - last.eta * last.g;
}

std::vector<std::vector<std::size_t>> split_batch(const std::vector<std::size_t>& batch, std::size_t parts) {
  if (parts < 2) throw InputError("subbatch split needs at least 2 parts");
  if (batch.size() < parts) throw InputError("batch smaller than number of subbatches");
  std::vector<std::vector<std::size_t>> out(parts);
  const std::size_t base = batch.size() / parts;
  const std::size_t extra = batch.size() % parts;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < parts; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    out[k].assign(batch.begin() + static_cast<std::ptrdiff_t>(pos),
                  batch.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, bool with_replacement, std::uint64_t seed,
                                      std::size_t t) {
  if (b == 0) throw InputError("batch size must be positive");
  gauss::RandomStream rng(seed, gauss::stream_id({0xBA7C4ull, t}));
  std::vector<std::size_t> out(b);
  if (with_replacement) {
    for (auto& i : out) i = static_cast<std::size_t>(rng.below(n));
    return out;
  }
  if (b > n) throw InputError("batch larger than training set for sampling without replacement");
  // Partial Fisher-Yates on an index permutation.
  std::vector<std::size_t> perm = all_indices(n);
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(n - k));
    std::swap(perm[k], perm[j]);
    out[k] = perm[k];
  }
  return out;
}

Trajectory run_sgd(const Problem& problem, const SgdConfig& config) {
  const std::size_t d = problem.dim();
  if (config.horizon < 2) throw InputError("sgd.T must be at least 2");
  if (config.subbatches == 1) throw InputError("sgd.subbatches must be 0 or at least 2");
  if (config.subbatches > config.batch) throw InputError("sgd.subbatches exceeds sgd.batch");

  Vector w = Vector::Zero(static_cast<Eigen::Index>(d));
  if (!config.w_init.empty()) {
    if (config.w_init.size() != d) throw InputError("sgd.w_init must have model dimension entries");
    w = Eigen::Map<const Vector>(config.w_init.data(), static_cast<Eigen::Index>(d));
  }

  Trajectory traj;
  traj.meta.model = problem.model_spec;
  traj.meta.dataset = problem.data_spec;
  traj.meta.sgd = config;
  traj.meta.dim = d;
  traj.steps.reserve(config.horizon - 1);

  const auto& model = *problem.model;
  for (std::size_t t = 1; t < config.horizon; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.w = w;
    rec.eta = config.eta.at(t);
    rec.batch = sample_batch(problem.train.size(), config.batch, config.with_replacement, config.seed, t);
    rec.g = model.grad(w, problem.train, rec.batch);
    if (config.subbatches >= 2) {
      for (const auto& part : split_batch(rec.batch, config.subbatches)) {
        rec.g_sub.push_back(model.grad(w, problem.train, part));
      }
    }
    rec.loss_train = model.loss(w, problem.train);
    rec.loss_eval = problem.eval.size() ? model.loss(w, problem.eval) : 0.0;
    if (!rec.g.allFinite() || !std::isfinite(rec.loss_train)) {
      throw RunError("non-finite gradient or loss", static_cast<long>(t));
    }

    w = rec.w - rec.eta * rec.g;
    traj.steps.push_back(std::move(rec));
    if (!w.allFinite() || w.norm() > kDivergenceNorm) {
      throw RunError("SGD iterates diverged", static_cast<long>(t));
    }
  }
  return traj;
}

double replay_error(const Trajectory& traj) {
  double err = 0.0;
  for (std::size_t k = 0; k + 1 < traj.steps.size(); ++k) {
    const auto& s = traj.steps[k];
    const Vector next = s.w - s.eta * s.g;
    err = std::max(err, (traj.steps[k + 1].w - next).cwiseAbs().maxCoeff());
  }
  return err;
}

}  // namespace vperturb::train
