#include "retarget/reward.hpp"

#include <stdexcept>

namespace retarget {

double orientation_distance(const Quat& gt, const Quat& sim) {
  return rotation_vector((gt * sim.conjugate()).normalized()).norm();
}

std::vector<std::string> RewardBreakdown::names() {
  return {"q", "qdot", "x", "xdot", "orientation", "contact", "action_diff", "action_min", "fail", "total"};
}

std::vector<double> RewardBreakdown::values() const {
  return {q, qdot, x, xdot, orientation, contact, action_diff, action_min, fail, total};
}

VecX imitation_weights(const CharacterSpec& spec) {
  VecX w = VecX::Zero(spec.num_dofs());
  for (const auto& e : spec.retarget.entries) {
    const JointSpec& j = spec.joints[e.joint];
    for (int d = 0; d < j.dof(); ++d) w[j.dof_offset + d] = e.weight;
  }
  return w;
}

ImitationDistances imitation_distances(const SimState& sim, const KinematicPose& kin, const HumanOrientation& gt,
                                       const CharacterSpec& spec, const VecX& weights) {
  const int j = spec.num_dofs();
  if (kin.joint_angles.size() != j || kin.joint_velocities.size() != j || weights.size() != j ||
      static_cast<int>(kin.link_positions.size()) != spec.num_links())
    throw std::invalid_argument("imitation reward: pose does not match the character");
  ImitationDistances d;
  const VecX dq = sim.q.tail(j) - kin.joint_angles;
  const VecX dqd = sim.qd.tail(j) - kin.joint_velocities;
  d.q = weights.dot(dq.cwiseAbs2());
  d.qdot = weights.dot(dqd.cwiseAbs2());
  const bool need_xdot = spec.reward.xdot.w > 0.0;
  std::vector<Vec3> v;
  if (need_xdot) v = link_origin_velocities(spec, sim.q, sim.qd, sim.link_poses);
  for (int i = 0; i < spec.num_links(); ++i) {
    const double w = spec.links[i].position_weight;
    if (w == 0.0) continue;
    d.x += w * (sim.link_poses[i].translation - kin.link_positions[i]).squaredNorm();
    if (need_xdot) d.xdot += w * (v[i] - kin.link_velocities[i]).squaredNorm();
  }
  d.orientation = orientation_distance(gt.root, sim.link_poses[spec.root_link].rotation) +
                  orientation_distance(gt.head, sim.link_poses[spec.head_link].rotation);
  return d;
}

void imitation_reward(const SimState& sim, const KinematicPose& kin, const HumanOrientation& gt,
                      const CharacterSpec& spec, const VecX& weights, RewardBreakdown& out) {
  const RewardParams& p = spec.reward;
  const ImitationDistances d = imitation_distances(sim, kin, gt, spec, weights);
  out.q = p.q.w > 0.0 ? kernel(p.q.w, p.q.k, d.q) : 0.0;
  out.qdot = p.qdot.w > 0.0 ? kernel(p.qdot.w, p.qdot.k, d.qdot) : 0.0;
  out.x = p.x.w > 0.0 ? kernel(p.x.w, p.x.k, d.x) : 0.0;
  out.xdot = p.xdot.w > 0.0 ? kernel(p.xdot.w, p.xdot.k, d.xdot) : 0.0;
  out.orientation = p.orientation.w > 0.0 ? kernel(p.orientation.w, p.orientation.k, d.orientation) : 0.0;
}

double contact_distance(const std::vector<double>& foot_forces, bool left, bool right, const RewardParams& params) {
  if (foot_forces.size() != 2) throw std::invalid_argument("contact reward needs two feet");
  const bool sim_left = foot_forces[0] > params.contact_force_threshold;
  const bool sim_right = foot_forces[1] > params.contact_force_threshold;
  const int mismatched = (sim_left != left) + (sim_right != right);
  if (params.contact_per_foot) return mismatched;
  return mismatched > 0 ? 1.0 : 0.0;
}

double contact_reward(const std::vector<double>& foot_forces, bool left, bool right, const RewardParams& params) {
  if (params.contact.w <= 0.0) return 0.0;
  return kernel(params.contact.w, params.contact.k, contact_distance(foot_forces, left, right, params));
}

void action_reward(const VecX& prev_action, const VecX& action, const RewardParams& params, RewardBreakdown& out) {
  if (prev_action.size() != action.size() || action.size() == 0)
    throw std::invalid_argument("action reward: length mismatch");
  const double n = static_cast<double>(action.size());
  const double d_diff = (prev_action - action).squaredNorm() / n;
  const double d_min = action.squaredNorm() / n;
  out.action_diff = params.action_diff.w > 0.0 ? kernel(params.action_diff.w, params.action_diff.k, d_diff) : 0.0;
  out.action_min = params.action_min.w > 0.0 ? kernel(params.action_min.w, params.action_min.k, d_min) : 0.0;
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Continue: return "continue";
    case Termination::Fail: return "fail";
    case Termination::Reset: return "reset";
  }
  return "?";
}

Termination check_termination(const SimState& sim, const Vec3& reference_root, int step, const CharacterSpec& spec) {
  for (int i = 0; i < spec.num_links(); ++i)
    if (spec.links[i].region == Region::Upper && sim.link_touching[i]) return Termination::Fail;
  if ((sim.q.head<3>() - reference_root).norm() > spec.reward.root_deviation) return Termination::Fail;
  if (step >= spec.reward.reset_steps) return Termination::Reset;
  return Termination::Continue;
}

}  // namespace retarget
