#include "retarget/kinematics.hpp"

namespace retarget {

Quat root_quat(const VecX& q) { return Quat(q[3], q[4], q[5], q[6]); }

void set_root_quat(VecX& q, const Quat& r) {
  q[3] = r.w();
  q[4] = r.x();
  q[5] = r.y();
  q[6] = r.z();
}

std::vector<Pose> forward_kinematics(const CharacterSpec& spec, const VecX& q) {
  const int n = spec.num_links();
  std::vector<Pose> poses(n);
  poses[0] = Pose{root_quat(q).normalized(), q.head<3>()};
  for (int i = 1; i < n; ++i) {
    const JointSpec& j = spec.joints[i];
    Pose p = poses[j.parent_link] * j.frame;
    for (int d = 0; d < j.dof(); ++d) p.rotation = p.rotation * axis_angle(j.axes[d], q[kRootPosDim + j.dof_offset + d]);
    p.rotation.normalize();
    poses[i] = p;
  }
  return poses;
}

std::vector<Vec3> link_origin_velocities(const CharacterSpec& spec, const VecX& q, const VecX& qd,
                                         const std::vector<Pose>& poses) {
  const int n = spec.num_links();
  std::vector<Vec3> v(n), w(n);
  v[0] = qd.head<3>();
  w[0] = qd.segment<3>(3);
  for (int i = 1; i < n; ++i) {
    const JointSpec& j = spec.joints[i];
    const int p = j.parent_link;
    v[i] = v[p] + w[p].cross(poses[i].translation - poses[p].translation);
    w[i] = w[p];
    if (j.dof() == 0) continue;
    Quat r = poses[p].rotation * j.frame.rotation;
    for (int d = 0; d < j.dof(); ++d) {
      w[i] += (r * j.axes[d]) * qd[kRootVelDim + j.dof_offset + d];
      r = r * axis_angle(j.axes[d], q[kRootPosDim + j.dof_offset + d]);
    }
  }
  return v;
}

MatX point_jacobian(const CharacterSpec& spec, const VecX& q, int link, const Vec3& point) {
  const auto poses = forward_kinematics(spec, q);
  const Vec3 x = poses[link].apply(point);
  MatX jac = MatX::Zero(3, kRootVelDim + spec.num_dofs());
  jac.block<3, 3>(0, 0).setIdentity();
  jac.block<3, 3>(0, 3) = -skew(x - poses[0].translation);
  for (int i = link; i > 0; i = spec.links[i].parent) {
    const JointSpec& j = spec.joints[i];
    if (j.dof() == 0) continue;
    const Pose f = poses[j.parent_link] * j.frame;
    Quat r = f.rotation;
    for (int d = 0; d < j.dof(); ++d) {
      const Vec3 axis = r * j.axes[d];
      jac.col(kRootVelDim + j.dof_offset + d) = axis.cross(x - f.translation);
      r = r * axis_angle(j.axes[d], q[kRootPosDim + j.dof_offset + d]);
    }
  }
  return jac;
}

VecX KinematicPose::q() const {
  VecX out(kRootPosDim + joint_angles.size());
  out.head<3>() = root_position;
  set_root_quat(out, root_orientation);
  out.tail(joint_angles.size()) = joint_angles;
  return out;
}

VecX KinematicPose::qd() const {
  VecX out(kRootVelDim + joint_velocities.size());
  out.head<3>() = root_linear_velocity;
  out.segment<3>(3) = root_angular_velocity;
  out.tail(joint_velocities.size()) = joint_velocities;
  return out;
}

void update_link_poses(const CharacterSpec& spec, KinematicPose& pose) {
  const auto poses = forward_kinematics(spec, pose.q());
  pose.link_positions.resize(poses.size());
  pose.link_orientations.resize(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    pose.link_positions[i] = poses[i].translation;
    pose.link_orientations[i] = poses[i].rotation;
  }
}

}  // namespace retarget
