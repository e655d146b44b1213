#pragma once

#include <vector>

#include "retarget/character.hpp"

namespace retarget {

/// Generalized-coordinate layout shared by kinematics and physics:
///   q  = [root position (3), root quaternion w x y z (4), joint angles]
///   qd = [root linear velocity (3), root angular velocity (3, world), joint rates]
inline constexpr int kRootPosDim = 7;
inline constexpr int kRootVelDim = 6;

Quat root_quat(const VecX& q);
void set_root_quat(VecX& q, const Quat& r);

/// World pose of every link frame.
std::vector<Pose> forward_kinematics(const CharacterSpec& spec, const VecX& q);

/// World velocity of every link frame origin for the layout above. `poses`
/// must come from forward_kinematics(spec, q).
std::vector<Vec3> link_origin_velocities(const CharacterSpec& spec, const VecX& q, const VecX& qd,
                                         const std::vector<Pose>& poses);

/// World-frame linear Jacobian (3 x qd size) of a point fixed in `link`,
/// given in link coordinates.
MatX point_jacobian(const CharacterSpec& spec, const VecX& q, int link, const Vec3& point);

/// Rough target pose s_kin for the character.
struct KinematicPose {
  Vec3 root_position = Vec3::Zero();
  Quat root_orientation = Quat::Identity();
  VecX joint_angles;
  Vec3 root_linear_velocity = Vec3::Zero();
  Vec3 root_angular_velocity = Vec3::Zero();
  VecX joint_velocities;
  std::vector<Vec3> link_positions;   ///< link frame origins, world
  std::vector<Vec3> link_velocities;  ///< finite-difference link origin velocities
  std::vector<Quat> link_orientations;
  bool left_contact = false;
  bool right_contact = false;

  VecX q() const;
  VecX qd() const;
};

/// Fills link positions/orientations of `pose` from its coordinates.
void update_link_poses(const CharacterSpec& spec, KinematicPose& pose);

}  // namespace retarget
