#include "vperturb/schedule/history.hpp"

#include "vperturb/errors.hpp"

namespace vperturb::schedule {

const Vector& HistoryView::iterate(std::size_t k) const {
  if (k == 0 || k > step_) throw InputError("iterate index outside H_{t-1}");
  return k == step_ ? current_ : past_[k - 1].w;
}

const Vector& HistoryView::gradient(std::size_t k) const {
  if (k == 0 || k >= step_) throw InputError("gradient index outside H_{t-1}");
  return past_[k - 1].g;
}

const std::vector<std::size_t>& HistoryView::batch(std::size_t k) const {
  if (k == 0 || k >= step_) throw InputError("batch index outside H_{t-1}");
  return past_[k - 1].batch;
}

double HistoryView::step_size(std::size_t k) const {
  if (k == 0 || k >= step_) throw InputError("step-size index outside H_{t-1}");
  return past_[k - 1].eta;
}

const Vector& HistoryView::virtual_iterate(std::size_t k) const {
  if (k == 0 || k > virtual_prefix_.size()) throw InputError("virtual iterate index outside prefix");
  return virtual_prefix_[k - 1];
}

std::optional<double> HistoryView::stat(const std::string& name) const {
  auto it = stats_.find(name);
  if (it == stats_.end()) return std::nullopt;
  return it->second;
}

HistoryView make_history_view(const train::Trajectory& traj, std::size_t t, std::span<const Vector> virtual_prefix) {
  if (t == 0 || t >= traj.horizon()) {
    throw InputError("history view step " + std::to_string(t) + " outside 1..T-1");
  }
  if (traj.steps.size() < t) throw InputError("trajectory shorter than requested step");

  HistoryView view;
  view.step_ = t;
  view.past_ = std::span<const train::StepRecord>(traj.steps.data(), t - 1);
  view.current_ = traj.steps[t - 1].w;

  double q = 0.0;
  for (const auto& rec : view.past_) q = kStatDecay * q + (1.0 - kStatDecay) * rec.g.squaredNorm();
  view.stats_[kGradSqEma] = q;

  if (!virtual_prefix.empty()) {
    if (virtual_prefix.size() < t) throw InputError("virtual prefix shorter than step");
    view.virtual_prefix_.assign(virtual_prefix.begin(), virtual_prefix.begin() + static_cast<std::ptrdiff_t>(t));
    double qv = 0.0;
    for (std::size_t k = 1; k < t; ++k) {
      qv = kStatDecay * qv + (1.0 - kStatDecay) * (view.virtual_prefix_[k] - view.virtual_prefix_[k - 1]).squaredNorm();
    }
    view.stats_[kVirtualStepSqEma] = qv;
  }
  return view;
}

}  // namespace vperturb::schedule
