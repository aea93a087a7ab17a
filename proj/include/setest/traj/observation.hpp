#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "setest/errors.hpp"

namespace setest::traj {

/// Width of a non-privileged observation o.
inline constexpr std::size_t kObsDim = 47;
/// Width of a privileged observation o' = (h, v_x, v_y, v_z).
inline constexpr std::size_t kPrivDim = 4;

// Column layout of o. Angular velocity and projected gravity are body-frame;
// omega_y > 0 is a backward (nose-up) pitch rotation and omega_x > 0 the
// sideflip roll direction. Legs are ordered FL, FR, RL, RR with joints
// (hip, thigh, knee); feet are (x, y, z) relative to the CoM.
namespace obs {
inline constexpr std::size_t omega = 0;
inline constexpr std::size_t gravity = 3;
inline constexpr std::size_t joint_pos = 6;
inline constexpr std::size_t joint_vel = 18;
inline constexpr std::size_t foot_pos = 30;
inline constexpr std::size_t cmd = 42;
inline constexpr std::size_t cmd_vx = 42;
inline constexpr std::size_t cmd_vy = 43;
inline constexpr std::size_t cmd_yaw_rate = 44;
inline constexpr std::size_t cmd_h_jump = 45;
inline constexpr std::size_t jump_sig = 46;
}  // namespace obs

namespace priv {
inline constexpr std::size_t h = 0;
inline constexpr std::size_t vx = 1;
inline constexpr std::size_t vy = 2;
inline constexpr std::size_t vz = 3;
}  // namespace priv

inline constexpr std::array<std::string_view, kPrivDim> kPrivNames{"h", "v_x", "v_y", "v_z"};

enum class Task : std::uint8_t { walk = 0, jump = 1, backflip = 2, sideflip = 3 };

inline constexpr std::array<Task, 4> kAllTasks{Task::walk, Task::jump, Task::backflip, Task::sideflip};
inline constexpr std::array<Task, 3> kJumpTasks{Task::jump, Task::backflip, Task::sideflip};

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::walk: return "walk";
    case Task::jump: return "jump";
    case Task::backflip: return "backflip";
    case Task::sideflip: return "sideflip";
  }
  return "?";
}

inline std::optional<Task> parse_task(std::string_view s) {
  for (Task t : kAllTasks) {
    if (task_name(t) == s) return t;
  }
  return std::nullopt;
}

inline Task task_from_id(std::uint8_t id) {
  if (id > 3) throw FormatError("unknown task id " + std::to_string(id));
  return static_cast<Task>(id);
}

/// Per-step phase annotation. Falling runs from the step after the jump goal
/// is reached until foot contact.
enum class Phase : std::uint8_t { stance = 0, flight = 1, falling = 2 };

/// One episode: row-major o (T x 47) and o' (T x 4) with phase labels.
struct Trajectory {
  Task task = Task::walk;
  std::uint64_t seed = 0;
  std::vector<double> obs;
  std::vector<double> priv;
  std::vector<Phase> phase;

  std::size_t length() const noexcept { return phase.size(); }

  std::span<const double> o(std::size_t t) const { return {obs.data() + t * kObsDim, kObsDim}; }
  std::span<double> o(std::size_t t) { return {obs.data() + t * kObsDim, kObsDim}; }
  std::span<const double> p(std::size_t t) const { return {priv.data() + t * kPrivDim, kPrivDim}; }
  std::span<double> p(std::size_t t) { return {priv.data() + t * kPrivDim, kPrivDim}; }

  void resize(std::size_t T) {
    obs.assign(T * kObsDim, 0.0);
    priv.assign(T * kPrivDim, 0.0);
    phase.assign(T, Phase::stance);
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using Dataset = std::vector<Trajectory>;

}  // namespace setest::traj
