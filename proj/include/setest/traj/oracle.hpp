#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "setest/errors.hpp"
#include "setest/traj/generator.hpp"
#include "setest/traj/observation.hpp"

namespace setest::traj {

namespace detail {

// Gait phase of leg FL from its thigh and knee angles.
inline double gait_phase(std::span<const double> o) {
  const double s = (o[obs::joint_pos + 1] - gait::kThighNominal) / gait::kThighAmp;
  const double c = (o[obs::joint_pos + 2] - gait::kKneeNominal) / gait::kKneeAmp;
  double psi = std::atan2(s, c);
  if (psi < 0.0) psi += kTwoPi;
  return psi;
}

// Unit heading from the mean fore-aft and lateral foot offsets.
inline std::array<double, 2> heading(std::span<const double> o) {
  double ux = 0.0, uy = 0.0;
  for (std::size_t leg = 0; leg < 4; ++leg) {
    ux += o[obs::foot_pos + 3 * leg + 0] - gait::kFootX[leg];
    uy += o[obs::foot_pos + 3 * leg + 1] - gait::kFootY[leg];
  }
  return {ux / (4.0 * gait::kHeadingShift), uy / (4.0 * gait::kHeadingShift)};
}

}  // namespace detail

/// Replays the generator's bookkeeping over a noiseless o history that starts
/// at the episode's first step and returns o' for every step from the second
/// one on (entry 0 of the result corresponds to step 1).
///
/// Stance: the gait phase advance between frames gives the gait frequency and
/// hence speed, the mean foot offset gives heading, and the phase gives h.
/// Flight: the jump-signal step fixes takeoff height and ballistic timing.
/// A body resting inverted on the ground (outside flight) is read from the
/// foot heights.
inline std::vector<std::array<double, kPrivDim>> oracle_privileged_all(
    std::span<const double> obs_rows, std::size_t steps, const GenParams& gp = {}) {
  if (steps < 2) {
    throw UnrecoverableError("velocity is not observable from a single frame; need >= 2 steps");
  }
  if (obs_rows.size() != steps * kObsDim) {
    throw DimensionError("history holds " + std::to_string(obs_rows.size()) + " values, expected " +
                         std::to_string(steps * kObsDim));
  }
  auto frame = [&](std::size_t k) { return obs_rows.subspan(k * kObsDim, kObsDim); };

  struct Flight {
    std::size_t k0;
    double h0, vz0, tf, psi0;
  };
  std::optional<Flight> flight;
  double vx = 0.0, vy = 0.0;
  double psi_prev = detail::gait_phase(frame(0));

  std::vector<std::array<double, kPrivDim>> out;
  out.reserve(steps - 1);
  for (std::size_t k = 1; k < steps; ++k) {
    const auto o = frame(k);
    std::array<double, kPrivDim> p{};
    if (flight) {
      const double tau = static_cast<double>(k - flight->k0) * gp.dt;
      if (tau < flight->tf) {
        const BallisticState b = ballistic_height(flight->h0, flight->vz0, tau, gp.g);
        p = {b.h, vx, vy, b.vz};
        out.push_back(p);
        continue;
      }
      psi_prev = flight->psi0;
      flight.reset();
    }
    if (o[obs::gravity + 2] > 0.0) {
      double h = 0.0;
      for (std::size_t leg = 0; leg < 4; ++leg) h = std::max(h, -o[obs::foot_pos + 3 * leg + 2]);
      vx = vy = 0.0;
      out.push_back({h, 0.0, 0.0, 0.0});
      continue;
    }
    const double psi = detail::gait_phase(o);
    double dpsi = std::fmod(psi - psi_prev, kTwoPi);
    if (dpsi < 0.0) dpsi += kTwoPi;
    const double f = dpsi / (kTwoPi * gp.dt);
    const double speed = std::max(0.0, (f - gp.f0) / gp.f_per_speed);
    const auto u = detail::heading(o);
    vx = speed * u[0];
    vy = speed * u[1];
    const double h = gp.h_walk + gp.height_amplitude * std::sin(psi);
    const double vz = gp.height_amplitude * std::cos(psi) * kTwoPi * f;
    out.push_back({h, vx, vy, vz});
    psi_prev = psi;
    if (o[obs::jump_sig] > 0.5) {
      const double vz0 = std::sqrt(2.0 * gp.g * (o[obs::cmd_h_jump] - h));
      flight = Flight{k, h, vz0, 2.0 * vz0 / gp.g, psi};
    }
  }
  return out;
}

/// o' at the last step of a noiseless history of at least two frames.
inline std::array<double, kPrivDim> oracle_privileged(std::span<const double> obs_rows, std::size_t steps,
                                                      const GenParams& gp = {}) {
  return oracle_privileged_all(obs_rows, steps, gp).back();
}

}  // namespace setest::traj
