#include "retarget/retarget.hpp"

#include <algorithm>
#include <stdexcept>

namespace retarget {

std::vector<double> decompose_rotation(const Quat& human_local, const std::vector<Vec3>& source_axes) {
  const Quat q = human_local.normalized();
  switch (source_axes.size()) {
    case 1:
      return {twist_angle(q, source_axes[0])};
    case 2: {
      const Vec3 third = source_axes[0].cross(source_axes[1]);
      const auto a = euler_decompose(q.toRotationMatrix(), source_axes[0], source_axes[1], third);
      return {a[0], a[1]};
    }
    case 3: {
      const auto a = euler_decompose(q.toRotationMatrix(), source_axes[0], source_axes[1], source_axes[2]);
      return {a[0], a[1], a[2]};
    }
    default:
      throw std::invalid_argument("decompose_rotation: 1 to 3 axes expected");
  }
}

KinematicPose retarget_frame(const MocapFrame& frame, const HumanSkeleton& skeleton, const CharacterSpec& spec,
                             double subject_height) {
  KinematicPose pose;
  const double scale = spec.retarget.root_scale(spec.total_height, subject_height);
  pose.root_position = frame.root_position;
  pose.root_position.y() *= scale;
  if (spec.retarget.scale_horizontal) {
    pose.root_position.x() *= scale;
    pose.root_position.z() *= scale;
  }
  pose.root_orientation = frame.root_orientation.normalized();

  const auto defaults = spec.default_angles();
  pose.joint_angles = Eigen::Map<const VecX>(defaults.data(), static_cast<Eigen::Index>(defaults.size()));
  for (const auto& e : spec.retarget.entries) {
    if (e.map.source.empty()) continue;
    const int h = skeleton.find(e.map.source);
    if (h < 0) continue;
    const JointSpec& j = spec.joints[e.joint];
    if (j.dof() == 0) continue;
    const Quat local = h == 0 ? Quat::Identity() : frame.joint_rotations[h];
    const auto angles = decompose_rotation(local, e.map.axes);
    for (int d = 0; d < j.dof(); ++d)
      pose.joint_angles[j.dof_offset + d] = std::clamp(angles[d], j.lower[d], j.upper[d]);
  }
  pose.joint_velocities = VecX::Zero(spec.num_dofs());
  update_link_poses(spec, pose);
  pose.link_velocities.assign(pose.link_positions.size(), Vec3::Zero());
  return pose;
}

std::vector<KinematicPose> retarget_clip(const MotionClip& clip, const CharacterSpec& spec,
                                         const ContactLabels& contacts) {
  const int n = clip.num_frames();
  std::vector<KinematicPose> out;
  out.reserve(n);
  for (const auto& f : clip.frames) out.push_back(retarget_frame(f, clip.skeleton, spec, clip.subject_height));
  if (!contacts.left_foot.empty()) {
    if (static_cast<int>(contacts.left_foot.size()) != n || static_cast<int>(contacts.right_foot.size()) != n)
      throw std::invalid_argument("retarget_clip: contact labels do not match the clip length");
    for (int t = 0; t < n; ++t) {
      out[t].left_contact = contacts.left_foot[t];
      out[t].right_contact = contacts.right_foot[t];
    }
  }
  if (n < 2) return out;

  for (int t = 0; t < n; ++t) {
    const int a = std::max(t - 1, 0);
    const int b = std::min(t + 1, n - 1);
    const double inv = clip.fps / (b - a);
    KinematicPose& p = out[t];
    p.root_linear_velocity = (out[b].root_position - out[a].root_position) * inv;
    p.root_angular_velocity = rotation_vector(out[b].root_orientation * out[a].root_orientation.conjugate()) * inv;
    p.joint_velocities = (out[b].joint_angles - out[a].joint_angles) * inv;
    for (std::size_t i = 0; i < p.link_positions.size(); ++i)
      p.link_velocities[i] = (out[b].link_positions[i] - out[a].link_positions[i]) * inv;
  }
  return out;
}

}  // namespace retarget
