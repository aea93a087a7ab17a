#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "setest/rewards.hpp"
#include "setest/rng.hpp"

using namespace setest;
using namespace setest::rewards;

namespace {

constexpr double kPi = std::numbers::pi;

// Stance with perfect tracking: the reference state of the worked totals.
RewardInputs tracking_stance() {
  RewardInputs in;
  in.v = {0.8, -0.2, 0.0};
  in.v_cmd = {0.8, -0.2};
  in.omega_z = in.omega_z_cmd = 0.3;
  in.h = in.h_walk;
  in.t_air = {0.5, 0.5, 0.5, 0.5};
  return in;
}

RewardInputs random_inputs(Rng& rng) {
  RewardInputs in;
  in.h = rng.uniform(0.0, 0.8);
  for (auto& x : in.v) x = rng.normal();
  in.omega_z = rng.normal();
  for (auto& x : in.v_cmd) x = rng.normal();
  in.omega_z_cmd = rng.normal();
  in.jump_sig = static_cast<int>(rng.below(2));
  in.falling = static_cast<int>(rng.below(2));
  in.pitch = rng.uniform(-kPi, kPi);
  in.roll = rng.uniform(-kPi, kPi);
  in.yaw_jump = rng.uniform(-kPi, kPi);
  in.yaw_land = rng.uniform(-kPi, kPi);
  for (auto& t : in.t_air) t = rng.uniform(0.0, 1.0);
  for (auto& d : in.dq_target) d = 0.2 * rng.normal();
  if (rng.below(4) == 0) in.h = in.h_jump + 0.5 * in.eps_h;  // hit the goal band now and then
  return in;
}

}  // namespace

TEST(Kernel, ClosedFormValues) {
  EXPECT_EQ(phi_kernel(0.0), 1.0);
  EXPECT_NEAR(phi_kernel(0.5), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(phi_kernel(std::array<double, 2>{0.3, 0.4}), 0.367879441171, 1e-12);
  EXPECT_NEAR(phi_kernel(-0.5), phi_kernel(0.5), 0.0);
  EXPECT_GT(phi_kernel(10.0), 0.0);
}

TEST(Clip, DefaultBounds) {
  EXPECT_EQ(clip(3.0), 2.0);
  EXPECT_EQ(clip(-1.0), -0.5);
  EXPECT_EQ(clip(1.0), 1.0);
  EXPECT_EQ(clip(5.0, 1.0, 1.0), 1.0);
  EXPECT_THROW(clip(0.0, 1.0, 0.0), ContractError);
}

TEST(JumpHeight, HeightVariant) {
  RewardInputs in;
  in.jump_sig = 1;
  in.h = in.h_jump;
  in.v[0] = 2.0;
  EXPECT_NEAR(jump_height_reward(in, Variant::height), 2.0, 1e-12);
  in.h = in.h_jump - 0.5;
  in.v[0] = 3.0;
  EXPECT_NEAR(jump_height_reward(in, Variant::height), 0.735758882343, 1e-9);
  in.jump_sig = 0;
  in.h = in.h_walk;
  EXPECT_EQ(jump_height_reward(in, Variant::height), 1.0);
}

TEST(JumpHeight, RollVariant) {
  RewardInputs in;
  in.jump_sig = 1;
  in.h = in.h_jump - 0.5;
  in.roll = -1.0;
  EXPECT_NEAR(jump_height_reward(in, Variant::roll), std::exp(-1.0), 1e-12);
  in.jump_sig = 0;
  EXPECT_EQ(jump_height_reward(in, Variant::roll), 0.0);
}

TEST(JumpGoal, BonusOnlyInsideBandWithSignal) {
  RewardInputs in;
  in.jump_sig = 1;
  in.h = in.h_jump - 0.5 * in.eps_h;
  in.v[0] = 1.0;
  EXPECT_EQ(jump_goal_reward(in, Variant::height), 1.0);
  in.v[0] = 3.0;
  EXPECT_EQ(jump_goal_reward(in, Variant::height), 2.0);
  in.roll = kPi / 2;
  EXPECT_NEAR(jump_goal_reward(in, Variant::roll), 1.570796326795, 1e-9);
  in.jump_sig = 0;
  EXPECT_EQ(jump_goal_reward(in, Variant::height), 0.0);
  EXPECT_EQ(jump_goal_reward(in, Variant::roll), 0.0);
  in.jump_sig = 1;
  in.h = in.h_jump - in.eps_h;  // boundary is exclusive
  EXPECT_EQ(jump_goal_reward(in, Variant::height), 0.0);
}

TEST(Pitch, OnlyWhileFalling) {
  RewardInputs in;
  in.falling = 1;
  in.pitch = 0.3;
  EXPECT_EQ(pitch_reward(in), 0.3);
  in.pitch = traj::wrap_angle(3 * kPi / 2);
  EXPECT_NEAR(pitch_reward(in), -1.570796326795, 1e-9);
  in.falling = 0;
  EXPECT_EQ(pitch_reward(in), 0.0);
}

TEST(Auxiliary, TrackingAirTimeYawAndActionRate) {
  RewardInputs in = tracking_stance();
  auto a = auxiliary_rewards(in);
  EXPECT_EQ(a.linear_vel, 1.0);
  EXPECT_EQ(a.angular_vel, 1.0);
  EXPECT_EQ(a.feet_air, 0.0);
  EXPECT_EQ(a.action_rate, 0.0);
  in.yaw_jump = 0.1;
  in.yaw_land = 0.1 + kPi / 2;
  EXPECT_NEAR(auxiliary_rewards(in).jump_forward, 2.467401100272, 1e-9);
  // shortest-angle wrapping across the +-pi seam
  in.yaw_jump = kPi - 0.1;
  in.yaw_land = -kPi + 0.1;
  EXPECT_NEAR(auxiliary_rewards(in).jump_forward, 0.04, 1e-12);
  in.t_air = {0.0, 1.0, 0.7, 0.2};
  EXPECT_NEAR(auxiliary_rewards(in).feet_air, -0.1, 1e-12);
  in.dq_target.fill(0.0);
  in.dq_target[0] = 0.3;
  in.dq_target[11] = -0.4;
  EXPECT_NEAR(auxiliary_rewards(in).action_rate, 0.25, 1e-12);
  in.v[2] = 5.0;  // vertical velocity is not tracked
  EXPECT_EQ(auxiliary_rewards(in).linear_vel, 1.0);
}

TEST(Weights, TableColumns) {
  const auto rj = RewardWeights::for_gait(Gait::RJ);
  const auto rb = RewardWeights::for_gait(Gait::RB);
  const auto rs = RewardWeights::for_gait(Gait::RS);
  EXPECT_EQ(rj[Term::linear_velocity], 20);
  EXPECT_EQ(rb[Term::linear_velocity], 20);
  EXPECT_EQ(rs[Term::linear_velocity], 20);
  EXPECT_EQ(rj[Term::angular_velocity], 6.66);
  EXPECT_EQ(rs[Term::angular_velocity], 10);
  EXPECT_EQ(rj[Term::pitch], 10);
  EXPECT_EQ(rb[Term::pitch], 50);
  EXPECT_EQ(rs[Term::pitch], 0);
  EXPECT_EQ(rs[Term::jump_forward], -400);
  EXPECT_EQ(rj[Term::jump_forward], 0);
  EXPECT_EQ(rs[Term::feet_air_time], 50);
  EXPECT_EQ(rs[Term::jump_height_roll], 5);
  EXPECT_EQ(rs[Term::jump_goal_roll], 1);
  EXPECT_EQ(rj[Term::jump_goal], 100);
  EXPECT_EQ(rj[Term::action_rate], 0);
  EXPECT_EQ(rb[Term::action_rate], -10);
}

TEST(Total, RunningJumpStanceWorkedValue) {
  const auto b = total_reward(tracking_stance(), Gait::RJ);
  EXPECT_NEAR(b.total, 31.66, 1e-9);
  EXPECT_NEAR(b[Term::linear_velocity], 20.0, 1e-12);
  EXPECT_NEAR(b[Term::angular_velocity], 6.66, 1e-12);
  EXPECT_NEAR(b[Term::jump_height], 5.0, 1e-12);
}

TEST(Total, BackflipPitchContribution) {
  RewardInputs in = tracking_stance();
  in.falling = 1;
  in.pitch = 0.2;
  EXPECT_NEAR(total_reward(in, Gait::RB)[Term::pitch], 10.0, 1e-12);
}

TEST(Total, SideflipWithoutYawDriftHasNoForwardPenalty) {
  RewardInputs in = tracking_stance();
  in.yaw_jump = in.yaw_land = 1.2;
  EXPECT_EQ(total_reward(in, Gait::RS)[Term::jump_forward], 0.0);
}

TEST(Total, RejectsInvalidInputs) {
  RewardInputs in;
  in.jump_sig = 2;
  EXPECT_THROW(total_reward(in, Gait::RJ), ContractError);
  in.jump_sig = 0;
  in.t_air[2] = -0.1;
  EXPECT_THROW(total_reward(in, Gait::RJ), ContractError);
}

TEST(Properties, BreakdownIsAdditive) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto in = random_inputs(rng);
    for (Gait g : {Gait::RJ, Gait::RB, Gait::RS}) {
      const auto b = total_reward(in, g);
      double sum = 0.0;
      for (double c : b.contribution) sum += c;
      EXPECT_NEAR(b.total, sum, 1e-12);
    }
  }
}

TEST(Properties, KernelTermsAreBounded) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto in = random_inputs(rng);
    const auto a = auxiliary_rewards(in);
    EXPECT_GT(a.linear_vel, 0.0);
    EXPECT_LE(a.linear_vel, 1.0);
    EXPECT_GT(a.angular_vel, 0.0);
    EXPECT_LE(a.angular_vel, 1.0);
    const double jh = jump_height_reward(in, Variant::height);
    EXPECT_LE(std::abs(jh), 2.0);
    EXPECT_LE(std::abs(jump_goal_reward(in, Variant::height)), 2.0);
  }
}

TEST(Properties, RunningJumpAndBackflipDifferOnlyInPitchAndActionRate) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto in = random_inputs(rng);
    const auto rj = total_reward(in, Gait::RJ);
    const auto rb = total_reward(in, Gait::RB);
    for (std::size_t t = 0; t < kTermCount; ++t) {
      const auto term = static_cast<Term>(t);
      if (term == Term::pitch || term == Term::action_rate) continue;
      EXPECT_EQ(rj.contribution[t], rb.contribution[t]) << term_name(term);
    }
    EXPECT_DOUBLE_EQ(rj.contribution[static_cast<std::size_t>(Term::pitch)] * 5.0,
              rb.contribution[static_cast<std::size_t>(Term::pitch)]);
    EXPECT_EQ(rj.contribution[static_cast<std::size_t>(Term::action_rate)], 0.0);
    EXPECT_EQ(rb.contribution[static_cast<std::size_t>(Term::action_rate)], -10.0 * rb.value[9]);
  }
}
