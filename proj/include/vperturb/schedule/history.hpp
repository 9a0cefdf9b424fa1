#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vperturb/train/sgd.hpp"

namespace vperturb::schedule {

using Vector = Eigen::VectorXd;

// Names of the scalar statistics a view carries.
inline constexpr const char* kGradSqEma = "grad_sq_ema";
inline constexpr const char* kVirtualStepSqEma = "virtual_step_sq_ema";

// Decay of the default pathwise statistic q_{t-1}.
inline constexpr double kStatDecay = 0.9;

// Snapshot of the real optimization history H_{t-1} as seen at step t.
//
// It exposes W_1..W_t and, for k < t, G_k, J_k and eta_k. Nothing from update
// t onward (G_t, J_t, W_{t+1}, ...) is reachable through this type. The view
// references the trajectory it was built from, which must outlive it.
class HistoryView {
 public:
  std::size_t step() const noexcept { return step_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(current_.size()); }

  // Number of completed updates, t - 1.
  std::size_t past_count() const noexcept { return past_.size(); }
  // W_k for 1 <= k <= t.
  const Vector& iterate(std::size_t k) const;
  // G_k, J_k, eta_k for 1 <= k < t.
  const Vector& gradient(std::size_t k) const;
  const std::vector<std::size_t>& batch(std::size_t k) const;
  double step_size(std::size_t k) const;

  // Virtual prefix W~_1..W~_t when the caller simulated one.
  bool has_virtual_prefix() const noexcept { return !virtual_prefix_.empty(); }
  const Vector& virtual_iterate(std::size_t k) const;

  std::optional<double> stat(const std::string& name) const;
  const std::map<std::string, double>& stats() const noexcept { return stats_; }

 private:
  friend HistoryView make_history_view(const train::Trajectory&, std::size_t,
                                       std::span<const Vector>);
  HistoryView() = default;

  std::size_t step_ = 0;
  std::span<const train::StepRecord> past_;
  Vector current_;
  std::vector<Vector> virtual_prefix_;
  std::map<std::string, double> stats_;
};

// H_{t-1} for 1 <= t <= T-1. Statistics: grad_sq_ema = EMA (decay 0.9, start 0)
// of |G_k|^2 over k < t; virtual_step_sq_ema likewise over |W~_k - W~_{k-1}|^2
// when a virtual prefix (at least t entries) is supplied.
HistoryView make_history_view(const train::Trajectory& traj, std::size_t t,
                              std::span<const Vector> virtual_prefix = {});

}  // namespace vperturb::schedule
