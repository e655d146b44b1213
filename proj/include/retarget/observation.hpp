#pragma once

#include <string>
#include <vector>

#include "retarget/character.hpp"
#include "retarget/mocap.hpp"
#include "retarget/physics.hpp"

namespace retarget {

/// Floor frame under the root, turned with the character's heading.
struct HeadingFrame {
  Vec3 origin = Vec3::Zero();
  double yaw = 0.0;

  Quat inverse_rotation() const { return axis_angle(Vec3::UnitY(), -yaw); }
  Vec3 point(const Vec3& world) const { return inverse_rotation() * (world - origin); }
  Quat rotation(const Quat& world) const { return inverse_rotation() * world; }
};

HeadingFrame heading_frame(const Vec3& root_position, const Quat& root_orientation);
HeadingFrame heading_frame(const SimState& state);

inline constexpr int kSensorDim = 27;

/// Moves sensor positions into character space with the retarget root
/// scale (height always, horizontal when `horizontal`).
SensorFrame scale_sensor(const SensorFrame& s, double scale, bool horizontal);

struct ObsBlock {
  std::string name;
  int offset = 0;
  int length = 0;
};

/// Policy observation:
///   joint_angles (j) | joint_velocities (j) | link_positions (3 per observed link)
///   | link_rot6 (6 per observed link) | sensors_prev (27) | sensors_cur (27)
/// A sensor block is hmd_pos, left_pos, right_pos, hmd_rot6, left_rot6,
/// right_rot6. Critic observations append, for the current and each future
/// mocap frame: root_pos (3) | root_rot6 (6) | joint_rot6 (6 per non-root
/// human joint).
struct ObsLayout {
  std::vector<ObsBlock> policy;
  std::vector<ObsBlock> critic;  ///< blocks after the policy part
  int policy_dim = 0;
  int critic_dim = 0;

  /// "name offset length" per line.
  std::string manifest() const;
};

struct ObsConfig {
  int future_frames = 4;        ///< K
  bool asymmetric_critic = true;  ///< false: the critic sees the policy observation only
};

ObsLayout observation_layout(const CharacterSpec& spec, int human_joints, const ObsConfig& config);

/// Writes one sensor frame in `heading` coordinates; controllers zeroed when
/// `headset_only`.
void write_sensor(const SensorFrame& s, const HeadingFrame& heading, bool headset_only, double* out);

VecX build_policy_obs(const SimState& state, const SensorFrame& prev, const SensorFrame& cur,
                      const CharacterSpec& spec, bool headset_only = false);

/// `window` holds the current mocap frame followed by K future frames (the
/// caller pads at the clip end). Root positions are multiplied by
/// `root_scale` before the heading transform.
VecX build_critic_obs(const VecX& policy_obs, const std::vector<const MocapFrame*>& window,
                      const HeadingFrame& heading, double root_scale, bool scale_horizontal);

}  // namespace retarget
