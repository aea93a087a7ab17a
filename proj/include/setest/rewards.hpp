#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "setest/errors.hpp"
#include "setest/traj/generator.hpp"

namespace setest::rewards {

enum class Gait { RJ, RB, RS };

inline std::string_view gait_name(Gait g) {
  switch (g) {
    case Gait::RJ: return "RJ";
    case Gait::RB: return "RB";
    case Gait::RS: return "RS";
  }
  return "?";
}

/// Everything the task reward reads at one control step.
struct RewardInputs {
  double h = 0.0;                         // CoM height, m
  std::array<double, 3> v{};              // body velocity, m/s
  double omega_z = 0.0;                   // yaw rate, rad/s
  std::array<double, 2> v_cmd{};          // commanded planar velocity
  double omega_z_cmd = 0.0;               // commanded yaw rate
  double h_jump = traj::GenParams{}.h_jump_min;
  double h_walk = traj::GenParams{}.h_walk;
  int jump_sig = 0;
  int falling = 0;
  double pitch = 0.0;                     // wrapped pitch angle, rad
  double roll = 0.0;                      // wrapped roll angle, rad
  double yaw_jump = 0.0;                  // heading at takeoff
  double yaw_land = 0.0;                  // heading at touchdown
  std::array<double, 4> t_air{};          // per-foot air time, s
  std::array<double, 12> dq_target{};     // change of joint targets since the previous step
  double eps_h = traj::GenParams{}.eps_h;

  void validate() const {
    if ((jump_sig != 0 && jump_sig != 1) || (falling != 0 && falling != 1)) {
      throw ContractError("reward flags must be 0 or 1");
    }
    for (double t : t_air) {
      if (!(t >= 0.0)) throw ContractError("foot air time must be >= 0, got " + std::to_string(t));
    }
    if (!(eps_h > 0.0)) throw ContractError("eps_h must be positive");
  }
};

enum class Term : std::size_t {
  linear_velocity,
  angular_velocity,
  jump_height,
  jump_goal,
  jump_height_roll,
  jump_goal_roll,
  pitch,
  jump_forward,
  feet_air_time,
  action_rate,
};

inline constexpr std::size_t kTermCount = 10;

inline constexpr std::array<std::string_view, kTermCount> kTermNames{
    "linear_velocity", "angular_velocity", "jump_height", "jump_goal",     "jump_height_roll",
    "jump_goal_roll",  "pitch",            "jump_forward", "feet_air_time", "action_rate"};

inline std::string_view term_name(Term t) { return kTermNames[static_cast<std::size_t>(t)]; }

/// Per-term weights of one gait column.
struct RewardWeights {
  std::array<double, kTermCount> w{};

  double operator[](Term t) const { return w[static_cast<std::size_t>(t)]; }

  static RewardWeights for_gait(Gait g) {
    //                     lin  ang   jh  goal jh_r goal_r pitch  fwd   air  rate
    switch (g) {
      case Gait::RJ: return {{20, 6.66, 5, 100, 0, 0, 10, 0, 5, 0}};
      case Gait::RB: return {{20, 6.66, 5, 100, 0, 0, 50, 0, 5, -10}};
      case Gait::RS: return {{20, 10, 5, 100, 5, 1, 0, -400, 50, -10}};
    }
    throw ContractError("unknown gait");
  }
};

/// exp(-|x|^2 / 0.25)
inline double phi_kernel(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return std::exp(-sq / 0.25);
}

inline double phi_kernel(double x) { return std::exp(-x * x / 0.25); }

inline double clip(double x, double lo = -0.5, double hi = 2.0) {
  if (lo > hi) throw ContractError("clip: lower bound above upper bound");
  return std::min(hi, std::max(lo, x));
}

/// Selects between the forward-speed and the roll-angle flavour of the
/// jump terms.
enum class Variant { height, roll };

inline double jump_height_reward(const RewardInputs& in, Variant variant) {
  if (variant == Variant::height) {
    return in.jump_sig == 1 ? phi_kernel(in.h_jump - in.h) * clip(in.v[0]) : phi_kernel(in.h_walk - in.h);
  }
  return in.jump_sig == 1 ? phi_kernel(in.h_jump - in.h) * std::abs(in.roll) : 0.0;
}

inline bool at_jump_goal(const RewardInputs& in) {
  return in.jump_sig == 1 && std::abs(in.h_jump - in.h) < in.eps_h;
}

inline double jump_goal_reward(const RewardInputs& in, Variant variant) {
  if (!at_jump_goal(in)) return 0.0;
  return variant == Variant::height ? clip(in.v[0]) : std::abs(in.roll);
}

inline double pitch_reward(const RewardInputs& in) { return in.falling == 1 ? in.pitch : 0.0; }

struct AuxiliaryTerms {
  double linear_vel = 0.0;
  double angular_vel = 0.0;
  double jump_forward = 0.0;
  double feet_air = 0.0;
  double action_rate = 0.0;  // squared norm; the negative weight makes it a penalty
};

inline AuxiliaryTerms auxiliary_rewards(const RewardInputs& in) {
  AuxiliaryTerms a;
  const std::array<double, 2> dv{in.v_cmd[0] - in.v[0], in.v_cmd[1] - in.v[1]};
  a.linear_vel = phi_kernel(dv);
  a.angular_vel = phi_kernel(in.omega_z_cmd - in.omega_z);
  const double yaw = traj::wrap_angle(in.yaw_land - in.yaw_jump);
  a.jump_forward = yaw * yaw;
  for (double t : in.t_air) a.feet_air += t - 0.5;
  for (double d : in.dq_target) a.action_rate += d * d;
  return a;
}

struct RewardBreakdown {
  Gait gait = Gait::RJ;
  std::array<double, kTermCount> value{};         // unweighted term values
  std::array<double, kTermCount> contribution{};  // weight * value
  double total = 0.0;

  double operator[](Term t) const { return contribution[static_cast<std::size_t>(t)]; }
};

inline RewardBreakdown total_reward(const RewardInputs& in, Gait gait) {
  in.validate();
  const RewardWeights w = RewardWeights::for_gait(gait);
  const AuxiliaryTerms aux = auxiliary_rewards(in);
  RewardBreakdown b;
  b.gait = gait;
  b.value = {aux.linear_vel,
             aux.angular_vel,
             jump_height_reward(in, Variant::height),
             jump_goal_reward(in, Variant::height),
             jump_height_reward(in, Variant::roll),
             jump_goal_reward(in, Variant::roll),
             pitch_reward(in),
             aux.jump_forward,
             aux.feet_air,
             aux.action_rate};
  for (std::size_t i = 0; i < kTermCount; ++i) {
    b.contribution[i] = w.w[i] * b.value[i];
    b.total += b.contribution[i];
  }
  return b;
}

}  // namespace setest::rewards
