#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "setest/rng.hpp"
#include "setest/traj/observation.hpp"

namespace setest::traj {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Observation noise standard deviations, applied to o only.
struct NoiseParams {
  double omega = 0.05;
  double gravity = 0.01;
  double joint_pos = 0.01;
  double joint_vel = 0.1;
  double foot_pos = 0.005;
  double cmd = 0.0;

  static NoiseParams none() { return {0, 0, 0, 0, 0, 0}; }
  bool is_zero() const {
    return omega == 0 && gravity == 0 && joint_pos == 0 && joint_vel == 0 && foot_pos == 0 && cmd == 0;
  }
};

struct GenParams {
  double g = 9.81;
  double dt = 0.02;
  double h_walk = 0.25;
  double h_jump_min = 0.4;
  double h_jump_max = 0.7;
  double vx_max = 2.0;         // v*_x drawn from [0, vx_max]
  double vy_max = 0.3;         // v*_y drawn from [-vy_max, vy_max]
  double yaw_rate_max = 1.0;   // omega*_yaw drawn from [-yaw_rate_max, yaw_rate_max]
  double f0 = 1.5;             // gait frequency at rest, Hz
  double f_per_speed = 1.0;    // Hz per m/s of planar speed
  double tau_v = 0.2;          // first-order velocity lag, s
  double eps_h = 0.02;         // jump goal tolerance, m
  double height_amplitude = 0.01;
  double segment_min = 0.8;    // command segment duration range, s
  double segment_max = 2.0;
  double first_jump_min = 1.0; // earliest jump command, s
  double jump_gap_min = 1.0;   // stance time between landing and the next jump, s
  double jump_gap_max = 2.0;
  std::size_t traj_len = 400;
  std::size_t max_episode_len = 1000;
  NoiseParams noise{};

  /// Longest flight any jump command can produce.
  double max_flight_time() const {
    const double rise = h_jump_max - (h_walk - height_amplitude);
    return 2.0 * std::sqrt(2.0 * g * rise) / g;
  }

  void validate() const {
    if (!(g > 0 && dt > 0 && h_walk > 0 && tau_v > 0 && f0 > 0 && f_per_speed > 0 && eps_h > 0 &&
          height_amplitude >= 0 && segment_min > 0 && segment_max >= segment_min && vx_max >= 0 &&
          vy_max >= 0 && yaw_rate_max >= 0 && jump_gap_min > 0 && jump_gap_max >= jump_gap_min &&
          first_jump_min > 0 && traj_len >= 1 && max_episode_len >= 1)) {
      throw ParameterError("generator parameters must be positive and ordered");
    }
    if (h_jump_max < h_jump_min) throw ParameterError("h_jump_max < h_jump_min");
    if (h_jump_min <= h_walk + height_amplitude) {
      throw ParameterError("jump target " + std::to_string(h_jump_min) +
                           " m is not above the walking height; apex unreachable");
    }
  }
};

// Kinematic constants of the scripted gait. The oracle inverts these.
namespace gait {
inline constexpr std::array<double, 4> kLegPhase{0.0, std::numbers::pi, std::numbers::pi, 0.0};
inline constexpr std::array<double, 4> kFootX{0.19, 0.19, -0.19, -0.19};
inline constexpr std::array<double, 4> kFootY{0.10, -0.10, 0.10, -0.10};
inline constexpr double kHipNominal = 0.0;
inline constexpr double kThighNominal = 0.8;
inline constexpr double kKneeNominal = -1.5;
inline constexpr double kHipAmp = 0.05;
inline constexpr double kThighAmp = 0.25;
inline constexpr double kKneeAmp = 0.25;
inline constexpr double kStrideAmp = 0.05;
inline constexpr double kHeadingShift = 0.02;  // mean foot offset along the velocity direction
inline constexpr double kSwingLift = 0.03;
inline constexpr double kTuckTime = 0.1;        // s to reach the full tuck
inline constexpr double kTuckThigh = 0.6;
inline constexpr double kTuckKnee = -0.8;
inline constexpr double kFlightFootZ = -0.25;
inline constexpr double kTuckFootLift = 0.1;
}  // namespace gait

struct BallisticState {
  double h;
  double vz;
};

/// h = h0 + vz0 t - g t^2 / 2, vz = vz0 - g t.
inline BallisticState ballistic_height(double h0, double vz0, double t, double g = 9.81) {
  if (t < 0.0) throw ContractError("ballistic_height: t must be >= 0");
  return {h0 + vz0 * t - 0.5 * g * t * t, vz0 - g * t};
}

/// Wraps a cumulative backward rotation to the reported pitch angle: rises
/// 0 -> pi/2, jumps to -pi/2, then returns to 0 over each half turn.
inline double pitch_angle_wrapped(double theta) {
  const double pi = std::numbers::pi;
  const double shifted = theta + 0.5 * pi;
  return shifted - pi * std::floor(shifted / pi) - 0.5 * pi;
}

/// Shortest signed angle, in (-pi, pi].
inline double wrap_angle(double a) {
  const double pi = std::numbers::pi;
  double r = std::fmod(a + pi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - pi;
}

struct VelocityCommand {
  std::size_t start = 0;  // first step the command applies to
  double vx = 0.0;
  double vy = 0.0;
  double yaw_rate = 0.0;
};

/// Commands for one episode: piecewise-constant velocity segments and the
/// steps at which the jump signal is raised.
struct CommandProfile {
  std::size_t length = 0;
  double h_jump = 0.5;
  std::vector<VelocityCommand> segments;
  std::vector<std::size_t> jumps;
};

inline CommandProfile random_profile(Task task, const GenParams& gp, Rng& rng,
                                     std::optional<std::size_t> length = std::nullopt) {
  CommandProfile prof;
  prof.length = length.value_or(gp.traj_len);
  prof.h_jump = rng.uniform(gp.h_jump_min, gp.h_jump_max);
  std::size_t k = 0;
  while (k < prof.length) {
    const double dur = rng.uniform(gp.segment_min, gp.segment_max);
    prof.segments.push_back({k, rng.uniform(0.0, gp.vx_max), rng.uniform(-gp.vy_max, gp.vy_max),
                             rng.uniform(-gp.yaw_rate_max, gp.yaw_rate_max)});
    k += std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(dur / gp.dt)));
  }
  if (task != Task::walk) {
    const auto flight_steps = static_cast<std::size_t>(std::ceil(gp.max_flight_time() / gp.dt)) + 1;
    std::size_t j = static_cast<std::size_t>(
        std::lround(rng.uniform(gp.first_jump_min, gp.first_jump_min + 1.0) / gp.dt));
    while (j < prof.length) {
      prof.jumps.push_back(j);
      j += flight_steps +
           static_cast<std::size_t>(std::lround(rng.uniform(gp.jump_gap_min, gp.jump_gap_max) / gp.dt));
    }
  }
  return prof;
}

namespace detail {

struct Flight {
  std::size_t k0;
  double h0;
  double vz0;
  double tf;
  double psi0;
  bool goal = false;
};

inline Trajectory simulate(Task task, const CommandProfile& prof, std::uint64_t seed,
                           const GenParams& gp, double turns) {
  gp.validate();
  if (prof.length == 0) throw ContractError("trajectory length must be >= 1");
  if (prof.length > gp.max_episode_len) {
    throw RangeError("trajectory length " + std::to_string(prof.length) + " exceeds max_episode_len " +
                     std::to_string(gp.max_episode_len));
  }
  if (prof.segments.empty() || prof.segments.front().start != 0) {
    throw ContractError("command profile must start with a segment at step 0");
  }
  for (std::size_t i = 1; i < prof.segments.size(); ++i) {
    if (prof.segments[i].start <= prof.segments[i - 1].start) {
      throw ContractError("command segments must have increasing start steps");
    }
  }
  if (task == Task::walk && !prof.jumps.empty()) throw ContractError("walk task takes no jump commands");
  if (!prof.jumps.empty() && prof.h_jump <= gp.h_walk + gp.height_amplitude) {
    throw ParameterError("jump target " + std::to_string(prof.h_jump) +
                         " m does not exceed the walking height; apex unreachable");
  }
  for (std::size_t i = 0; i < prof.jumps.size(); ++i) {
    if (prof.jumps[i] == 0 || (i > 0 && prof.jumps[i] <= prof.jumps[i - 1])) {
      throw ContractError("jump steps must be positive and increasing");
    }
  }

  using namespace gait;
  Rng rng(seed);
  const std::size_t T = prof.length;
  const double dt = gp.dt;
  const double alpha = 1.0 - std::exp(-dt / gp.tau_v);
  const double omega_nominal = kTwoPi * gp.f0;

  Trajectory tr;
  tr.task = task;
  tr.seed = seed;
  tr.resize(T);

  double psi = rng.uniform(0.0, kTwoPi);
  double vx = prof.segments.front().vx;
  double vy = prof.segments.front().vy;
  double yaw_rate = prof.segments.front().yaw_rate;
  std::size_t seg = 0;
  std::size_t next_jump = 0;
  std::optional<Flight> flight;

  for (std::size_t k = 0; k < T; ++k) {
    while (seg + 1 < prof.segments.size() && prof.segments[seg + 1].start <= k) ++seg;
    const VelocityCommand& cmd = prof.segments[seg];

    double tau = 0.0;
    if (flight) {
      tau = static_cast<double>(k - flight->k0) * dt;
      if (tau >= flight->tf) {
        psi = flight->psi0;
        flight.reset();
      }
    }
    if (next_jump < prof.jumps.size() && prof.jumps[next_jump] < k) {
      throw ContractError("jump command at step " + std::to_string(prof.jumps[next_jump]) +
                          " falls inside a flight");
    }

    auto o = tr.o(k);
    auto p = tr.p(k);
    double h = 0.0, vz = 0.0, sig = 0.0, theta = 0.0;
    const double speed_dir_norm = std::hypot(vx, vy);
    const bool in_flight = flight && k > flight->k0;

    if (!in_flight) {
      if (k > 0) {
        vx += alpha * (cmd.vx - vx);
        vy += alpha * (cmd.vy - vy);
        yaw_rate += alpha * (cmd.yaw_rate - yaw_rate);
      }
      const double speed = std::hypot(vx, vy);
      const double f = gp.f0 + gp.f_per_speed * speed;
      if (k > 0) psi = std::fmod(psi + kTwoPi * f * dt, kTwoPi);
      h = gp.h_walk + gp.height_amplitude * std::sin(psi);
      vz = gp.height_amplitude * std::cos(psi) * kTwoPi * f;
      const double ux = speed > 1e-12 ? vx / speed : 1.0;
      const double uy = speed > 1e-12 ? vy / speed : 0.0;
      for (std::size_t leg = 0; leg < 4; ++leg) {
        const double a = psi + kLegPhase[leg];
        const double s = std::sin(a), c = std::cos(a);
        o[obs::joint_pos + 3 * leg + 0] = kHipNominal + kHipAmp * s;
        o[obs::joint_pos + 3 * leg + 1] = kThighNominal + kThighAmp * s;
        o[obs::joint_pos + 3 * leg + 2] = kKneeNominal + kKneeAmp * c;
        // joint rates reported at the nominal gait rate; speed is not visible in one frame
        o[obs::joint_vel + 3 * leg + 0] = kHipAmp * c * omega_nominal;
        o[obs::joint_vel + 3 * leg + 1] = kThighAmp * c * omega_nominal;
        o[obs::joint_vel + 3 * leg + 2] = -kKneeAmp * s * omega_nominal;
        o[obs::foot_pos + 3 * leg + 0] = kFootX[leg] + (kStrideAmp * c + kHeadingShift) * ux;
        o[obs::foot_pos + 3 * leg + 1] = kFootY[leg] + (kStrideAmp * c + kHeadingShift) * uy;
        o[obs::foot_pos + 3 * leg + 2] = -h + kSwingLift * std::max(0.0, s);
      }
      tr.phase[k] = Phase::stance;
      if (next_jump < prof.jumps.size() && prof.jumps[next_jump] == k) {
        ++next_jump;
        sig = 1.0;
        const double vz0 = std::sqrt(2.0 * gp.g * (prof.h_jump - h));
        flight = Flight{k, h, vz0, 2.0 * vz0 / gp.g, psi, false};
      }
    } else {
      const BallisticState b = ballistic_height(flight->h0, flight->vz0, tau, gp.g);
      h = b.h;
      vz = b.vz;
      if (!flight->goal) {
        sig = 1.0;
        if (std::abs(prof.h_jump - h) < gp.eps_h) flight->goal = true;
        tr.phase[k] = Phase::flight;
      } else {
        tr.phase[k] = Phase::falling;
      }
      theta = turns * kTwoPi * tau / flight->tf;
      const double tuck = std::min(1.0, tau / kTuckTime);
      const double tuck_rate = tau < kTuckTime ? 1.0 / kTuckTime : 0.0;
      const double ux = speed_dir_norm > 1e-12 ? vx / speed_dir_norm : 1.0;
      const double uy = speed_dir_norm > 1e-12 ? vy / speed_dir_norm : 0.0;
      for (std::size_t leg = 0; leg < 4; ++leg) {
        o[obs::joint_pos + 3 * leg + 0] = kHipNominal;
        o[obs::joint_pos + 3 * leg + 1] = kThighNominal + kTuckThigh * tuck;
        o[obs::joint_pos + 3 * leg + 2] = kKneeNominal + kTuckKnee * tuck;
        o[obs::joint_vel + 3 * leg + 0] = 0.0;
        o[obs::joint_vel + 3 * leg + 1] = kTuckThigh * tuck_rate;
        o[obs::joint_vel + 3 * leg + 2] = kTuckKnee * tuck_rate;
        o[obs::foot_pos + 3 * leg + 0] = kFootX[leg] + kHeadingShift * ux;
        o[obs::foot_pos + 3 * leg + 1] = kFootY[leg] + kHeadingShift * uy;
        o[obs::foot_pos + 3 * leg + 2] = kFlightFootZ + kTuckFootLift * tuck;
      }
    }

    // Body rotation rate averaged over [t_k, t_k + dt], so that summing
    // omega * dt over the episode reproduces the flip angle exactly.
    double rot_rate = 0.0;
    if (flight && task != Task::jump && task != Task::walk) {
      const double lo = std::max(0.0, tau);
      const double hi = std::min(flight->tf, tau + dt);
      rot_rate = turns * kTwoPi * std::max(0.0, hi - lo) / (flight->tf * dt);
    }
    o[obs::omega + 0] = task == Task::sideflip ? rot_rate : 0.0;
    o[obs::omega + 1] = task == Task::backflip ? rot_rate : 0.0;
    o[obs::omega + 2] = yaw_rate;
    if (task == Task::backflip) {
      o[obs::gravity + 0] = -std::sin(theta);
      o[obs::gravity + 1] = 0.0;
      o[obs::gravity + 2] = -std::cos(theta);
    } else if (task == Task::sideflip) {
      o[obs::gravity + 0] = 0.0;
      o[obs::gravity + 1] = -std::sin(theta);
      o[obs::gravity + 2] = -std::cos(theta);
    } else {
      o[obs::gravity + 0] = 0.0;
      o[obs::gravity + 1] = 0.0;
      o[obs::gravity + 2] = -1.0;
    }
    o[obs::cmd_vx] = cmd.vx;
    o[obs::cmd_vy] = cmd.vy;
    o[obs::cmd_yaw_rate] = cmd.yaw_rate;
    o[obs::cmd_h_jump] = prof.h_jump;
    o[obs::jump_sig] = sig;

    p[priv::h] = h;
    p[priv::vx] = vx;
    p[priv::vy] = vy;
    p[priv::vz] = vz;
  }

  if (!gp.noise.is_zero()) {
    Rng noise_rng(splitmix64(seed ^ 0x6e6f697365ULL));
    struct Group {
      std::size_t begin, end;
      double sigma;
    };
    const Group groups[] = {{obs::omega, obs::gravity, gp.noise.omega},
                            {obs::gravity, obs::joint_pos, gp.noise.gravity},
                            {obs::joint_pos, obs::joint_vel, gp.noise.joint_pos},
                            {obs::joint_vel, obs::foot_pos, gp.noise.joint_vel},
                            {obs::foot_pos, obs::cmd, gp.noise.foot_pos},
                            {obs::cmd, kObsDim, gp.noise.cmd}};
    for (std::size_t k = 0; k < T; ++k) {
      auto o = tr.o(k);
      for (const auto& grp : groups) {
        if (grp.sigma == 0.0) continue;
        for (std::size_t c = grp.begin; c < grp.end; ++c) o[c] += grp.sigma * noise_rng.normal();
      }
    }
  }
  return tr;
}

}  // namespace detail

/// Scripted trajectory for a task under a command profile. Deterministic in
/// (task, profile, seed, params).
inline Trajectory gen_trajectory(Task task, const CommandProfile& profile, std::uint64_t seed,
                                 const GenParams& gp = {}) {
  return detail::simulate(task, profile, seed, gp, 1.0);
}

/// Backflip that completes only half a turn: the robot lands on its back and
/// stays inverted at `rest_height` for the rest of the episode.
inline Trajectory gen_failed_backflip(const CommandProfile& profile, std::uint64_t seed,
                                      const GenParams& gp = {}, double rest_height = 0.12) {
  if (profile.jumps.empty()) throw ContractError("failed backflip needs a jump command");
  GenParams clean = gp;
  clean.noise = NoiseParams::none();
  Trajectory tr = detail::simulate(Task::backflip, profile, seed, clean, 0.5);
  // The first stance sample after the first flight is the landing.
  std::size_t k = profile.jumps.front() + 1;
  while (k < tr.length() && tr.phase[k] != Phase::stance) ++k;
  for (; k < tr.length(); ++k) {
    auto o = tr.o(k);
    auto p = tr.p(k);
    o[obs::omega + 0] = o[obs::omega + 1] = o[obs::omega + 2] = 0.0;
    o[obs::gravity + 0] = 0.0;
    o[obs::gravity + 1] = 0.0;
    o[obs::gravity + 2] = 1.0;
    o[obs::jump_sig] = 0.0;
    for (std::size_t leg = 0; leg < 4; ++leg) {
      o[obs::joint_pos + 3 * leg + 0] = gait::kHipNominal;
      o[obs::joint_pos + 3 * leg + 1] = gait::kThighNominal + gait::kTuckThigh;
      o[obs::joint_pos + 3 * leg + 2] = gait::kKneeNominal + gait::kTuckKnee;
      for (std::size_t j = 0; j < 3; ++j) o[obs::joint_vel + 3 * leg + j] = 0.0;
      o[obs::foot_pos + 3 * leg + 0] = gait::kFootX[leg];
      o[obs::foot_pos + 3 * leg + 1] = gait::kFootY[leg];
      o[obs::foot_pos + 3 * leg + 2] = -rest_height;
    }
    p[priv::h] = rest_height;
    p[priv::vx] = p[priv::vy] = p[priv::vz] = 0.0;
    tr.phase[k] = Phase::stance;
  }
  return tr;
}

/// Task mixture weights; must sum to 1.
using Mixture = std::vector<std::pair<Task, double>>;

/// Largest-remainder allocation of n items to the mixture weights.
inline std::vector<std::size_t> allocate_counts(std::size_t n, const Mixture& mix) {
  if (mix.empty()) throw ContractError("empty task mixture");
  double total = 0.0;
  for (const auto& [task, w] : mix) {
    if (w < 0.0) throw ContractError("negative mixture weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("mixture weights must sum to 1");
  std::vector<std::size_t> counts(mix.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double quota = static_cast<double>(n) * mix[i].second;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += counts[i];
    rema.emplace_back(quota - std::floor(quota), i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[rema[r % rema.size()].second];
  return counts;
}

inline std::uint64_t trajectory_seed(std::uint64_t global_seed, std::size_t index) {
  return splitmix64(global_seed ^ static_cast<std::uint64_t>(index));
}

/// n_traj trajectories, tasks in mixture order, trajectory i seeded by
/// splitmix64(seed ^ i). The result does not depend on `workers`.
inline Dataset gen_dataset(std::size_t n_traj, const Mixture& mix, std::uint64_t seed,
                           const GenParams& gp = {}, unsigned workers = 1) {
  if (n_traj == 0) throw ContractError("n_traj must be >= 1");
  gp.validate();
  const auto counts = allocate_counts(n_traj, mix);
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < mix.size(); ++i) tasks.insert(tasks.end(), counts[i], mix[i].first);

  Dataset out(n_traj);
  auto make = [&](std::size_t i) {
    const std::uint64_t s = trajectory_seed(seed, i);
    Rng prof_rng(splitmix64(s ^ 0x70726f66ULL));
    out[i] = gen_trajectory(tasks[i], random_profile(tasks[i], gp, prof_rng), s, gp);
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < n_traj; ++i) make(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n_traj; i += workers) make(i);
      });
    }
  }
  return out;
}

/// Mixture with equal weight on each listed task.
template <class Tasks>
Mixture uniform_mixture(const Tasks& tasks) {
  Mixture m;
  const double w = 1.0 / static_cast<double>(std::size(tasks));
  for (Task t : tasks) m.emplace_back(t, w);
  return m;
}

}  // namespace setest::traj
