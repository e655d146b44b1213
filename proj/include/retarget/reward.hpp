#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "retarget/character.hpp"
#include "retarget/kinematics.hpp"
#include "retarget/physics.hpp"

namespace retarget {

/// w * exp(-k * d)
inline double kernel(double w, double k, double d) { return w * std::exp(-k * d); }

/// Norm of the axis-angle form of gt * sim^-1.
double orientation_distance(const Quat& gt, const Quat& sim);

struct RewardBreakdown {
  double q = 0.0, qdot = 0.0, x = 0.0, xdot = 0.0, orientation = 0.0;
  double contact = 0.0, action_diff = 0.0, action_min = 0.0;
  double fail = 0.0;
  double total = 0.0;

  void sum() { total = q + qdot + x + xdot + orientation + contact + action_diff + action_min + fail; }
  static std::vector<std::string> names();
  std::vector<double> values() const;
};

/// Human orientations the orientation term compares against.
struct HumanOrientation {
  Quat root = Quat::Identity();
  Quat head = Quat::Identity();
};

/// Per-DOF imitation weights w_i from the retarget map.
VecX imitation_weights(const CharacterSpec& spec);

struct ImitationDistances {
  double q = 0.0, qdot = 0.0, x = 0.0, xdot = 0.0, orientation = 0.0;
};

ImitationDistances imitation_distances(const SimState& sim, const KinematicPose& kin, const HumanOrientation& gt,
                                       const CharacterSpec& spec, const VecX& weights);

/// Fills the five imitation terms of `out`.
void imitation_reward(const SimState& sim, const KinematicPose& kin, const HumanOrientation& gt,
                      const CharacterSpec& spec, const VecX& weights, RewardBreakdown& out);

/// Number of feet whose simulated contact (normal force above the
/// threshold) disagrees with the human label, or 0/1 in single-flag mode.
double contact_distance(const std::vector<double>& foot_forces, bool left, bool right, const RewardParams& params);
double contact_reward(const std::vector<double>& foot_forces, bool left, bool right, const RewardParams& params);

/// Sets action_diff and action_min of `out`.
void action_reward(const VecX& prev_action, const VecX& action, const RewardParams& params, RewardBreakdown& out);

enum class Termination { Continue, Fail, Reset };

const char* to_string(Termination t);

/// Fail on an upper-body ground touch or a root further than the threshold
/// from the reference root; scheduled reset once `step` reaches the reset
/// horizon.
Termination check_termination(const SimState& sim, const Vec3& reference_root, int step, const CharacterSpec& spec);

}  // namespace retarget
