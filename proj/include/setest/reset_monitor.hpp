#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "setest/errors.hpp"
#include "setest/estimator.hpp"
#include "setest/traj/generator.hpp"
#include "setest/traj/observation.hpp"

namespace setest::reset {

struct ResetConfig {
  double eps_r = 0.0;  // cosine threshold between projected and world gravity
  double h_walk = traj::GenParams{}.h_walk;
  std::array<double, 3> gravity{0.0, 0.0, -1.0};
  std::size_t debounce = 3;  // consecutive positive steps before a trigger is reported

  void validate() const {
    if (!(eps_r >= -1.0 && eps_r <= 1.0)) throw ContractError("eps_r must lie in [-1, 1]");
    if (!std::isfinite(h_walk)) throw ContractError("h_walk must be finite");
    const double n = std::sqrt(gravity[0] * gravity[0] + gravity[1] * gravity[1] + gravity[2] * gravity[2]);
    if (std::abs(n - 1.0) > 1e-6) throw ContractError("world gravity direction must be a unit vector");
    if (debounce == 0) throw ContractError("debounce must be >= 1");
  }
};

/// True when the body is tilted past the threshold while low: the robot has
/// fallen rather than being mid-flip.
inline bool should_reset(std::span<const double> g_p, double h_est, const ResetConfig& cfg = {}) {
  if (g_p.size() != 3) throw DimensionError("projected gravity must have 3 components");
  const double n = std::sqrt(g_p[0] * g_p[0] + g_p[1] * g_p[1] + g_p[2] * g_p[2]);
  if (!(std::abs(n - 1.0) <= 1e-6)) {
    throw ContractError("projected gravity is not a unit vector (norm " + std::to_string(n) + ")");
  }
  const double cos = g_p[0] * cfg.gravity[0] + g_p[1] * cfg.gravity[1] + g_p[2] * cfg.gravity[2];
  return cos < cfg.eps_r && h_est < cfg.h_walk;
}

struct MonitorResult {
  std::vector<bool> flags;              // raw per-step should_reset
  std::optional<std::size_t> trigger;   // first step of the first debounced run
};

/// Applies should_reset along one trajectory with per-step height estimates.
/// Steps whose estimate is NaN (no usable history yet) never flag. Measured
/// gravity carries sensor noise, so it is renormalized to a direction first;
/// a zero or non-finite reading is a contract violation.
inline MonitorResult run_monitor(const traj::Trajectory& tr, std::span<const double> h_est,
                                 const ResetConfig& cfg = {}) {
  cfg.validate();
  if (h_est.size() != tr.length()) {
    throw DimensionError("run_monitor: " + std::to_string(h_est.size()) + " height estimates for " +
                         std::to_string(tr.length()) + " steps");
  }
  MonitorResult r;
  r.flags.resize(tr.length(), false);
  std::size_t run = 0;
  for (std::size_t t = 0; t < tr.length(); ++t) {
    const auto g = tr.o(t).subspan(traj::obs::gravity, 3);
    const double n = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw ContractError("projected gravity at step " + std::to_string(t) + " has no direction");
    }
    const std::array<double, 3> unit{g[0] / n, g[1] / n, g[2] / n};
    const bool flag = !std::isnan(h_est[t]) && should_reset(unit, h_est[t], cfg);
    r.flags[t] = flag;
    run = flag ? run + 1 : 0;
    if (!r.trigger && run == cfg.debounce) r.trigger = t + 1 - cfg.debounce;
  }
  return r;
}

/// Runs the estimator closed-loop over the trajectory and monitors its
/// height channel.
inline MonitorResult run_monitor(const traj::Trajectory& tr, const Estimator& est, const ResetConfig& cfg = {}) {
  const auto pred = est.predict(std::span(&tr, 1), Mode::closed_loop);
  std::vector<double> h(tr.length());
  for (std::size_t t = 0; t < tr.length(); ++t) h[t] = pred[0][t * traj::kPrivDim + traj::priv::h];
  return run_monitor(tr, h, cfg);
}

}  // namespace setest::reset
