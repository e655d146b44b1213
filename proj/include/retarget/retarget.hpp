#pragma once

#include <vector>

#include "retarget/character.hpp"
#include "retarget/kinematics.hpp"
#include "retarget/mocap.hpp"

namespace retarget {

/// Joint angles of `spec` read off one human joint rotation, expressed about
/// the signed source axes of the map entry.
std::vector<double> decompose_rotation(const Quat& human_local, const std::vector<Vec3>& source_axes);

/// Rough kinematic pose for one mocap frame. Matched joints copy the human
/// joint angles (clamped to the limits), the rest take their default pose,
/// and the root is scaled by the map's root scale. Velocities are left zero.
KinematicPose retarget_frame(const MocapFrame& frame, const HumanSkeleton& skeleton, const CharacterSpec& spec,
                             double subject_height);

/// Frame-wise retargeting plus central-difference velocities at the clip
/// rate. `contacts` (if non-empty) is copied into the poses.
std::vector<KinematicPose> retarget_clip(const MotionClip& clip, const CharacterSpec& spec,
                                         const ContactLabels& contacts = {});

}  // namespace retarget
