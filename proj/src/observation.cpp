#include "retarget/observation.hpp"

#include <sstream>

namespace retarget {

HeadingFrame heading_frame(const Vec3& root_position, const Quat& root_orientation) {
  HeadingFrame h;
  h.origin = Vec3(root_position.x(), 0.0, root_position.z());
  h.yaw = heading_yaw(root_orientation);
  return h;
}

HeadingFrame heading_frame(const SimState& state) {
  return heading_frame(state.q.head<3>(), root_quat(state.q).normalized());
}

SensorFrame scale_sensor(const SensorFrame& s, double scale, bool horizontal) {
  const Vec3 f(horizontal ? scale : 1.0, scale, horizontal ? scale : 1.0);
  SensorFrame out = s;
  out.hmd_pos = s.hmd_pos.cwiseProduct(f);
  out.left_pos = s.left_pos.cwiseProduct(f);
  out.right_pos = s.right_pos.cwiseProduct(f);
  return out;
}

std::string ObsLayout::manifest() const {
  std::ostringstream os;
  os << "# block offset length\n";
  for (const auto& b : policy) os << b.name << ' ' << b.offset << ' ' << b.length << '\n';
  for (const auto& b : critic) os << b.name << ' ' << b.offset << ' ' << b.length << '\n';
  os << "# policy_dim " << policy_dim << "\n# critic_dim " << critic_dim << '\n';
  return os.str();
}

ObsLayout observation_layout(const CharacterSpec& spec, int human_joints, const ObsConfig& config) {
  ObsLayout layout;
  int offset = 0;
  auto add = [&](std::vector<ObsBlock>& v, const std::string& name, int len) {
    v.push_back({name, offset, len});
    offset += len;
  };
  const int j = spec.num_dofs();
  const int l = static_cast<int>(spec.observed_links.size());
  add(layout.policy, "joint_angles", j);
  add(layout.policy, "joint_velocities", j);
  add(layout.policy, "link_positions", 3 * l);
  add(layout.policy, "link_rot6", 6 * l);
  add(layout.policy, "sensors_prev", kSensorDim);
  add(layout.policy, "sensors_cur", kSensorDim);
  layout.policy_dim = offset;
  if (config.asymmetric_critic) {
    for (int k = 0; k <= config.future_frames; ++k) {
      const std::string tag = "mocap_t" + (k == 0 ? std::string() : "+" + std::to_string(k));
      add(layout.critic, tag + "_root_pos", 3);
      add(layout.critic, tag + "_root_rot6", 6);
      add(layout.critic, tag + "_joint_rot6", 6 * (human_joints - 1));
    }
  }
  layout.critic_dim = offset;
  return layout;
}

namespace {

void put_rot6(const Quat& q, double* out) {
  const auto r = rot6(q.toRotationMatrix());
  for (int i = 0; i < 6; ++i) out[i] = r[i];
}

void put_vec(const Vec3& v, double* out) {
  out[0] = v.x();
  out[1] = v.y();
  out[2] = v.z();
}

}  // namespace

void write_sensor(const SensorFrame& s, const HeadingFrame& heading, bool headset_only, double* out) {
  put_vec(heading.point(s.hmd_pos), out);
  put_vec(heading.point(s.left_pos), out + 3);
  put_vec(heading.point(s.right_pos), out + 6);
  put_rot6(heading.rotation(s.hmd_rot), out + 9);
  put_rot6(heading.rotation(s.left_rot), out + 15);
  put_rot6(heading.rotation(s.right_rot), out + 21);
  if (headset_only) {
    for (int i = 3; i < 9; ++i) out[i] = 0.0;
    for (int i = 15; i < 27; ++i) out[i] = 0.0;
  }
}

VecX build_policy_obs(const SimState& state, const SensorFrame& prev, const SensorFrame& cur,
                      const CharacterSpec& spec, bool headset_only) {
  const int j = spec.num_dofs();
  const int l = static_cast<int>(spec.observed_links.size());
  VecX obs(2 * j + 9 * l + 2 * kSensorDim);
  const HeadingFrame h = heading_frame(state);
  obs.head(j) = state.q.tail(j);
  obs.segment(j, j) = state.qd.tail(j);
  double* p = obs.data() + 2 * j;
  for (int k = 0; k < l; ++k) put_vec(h.point(state.link_poses[spec.observed_links[k]].translation), p + 3 * k);
  p += 3 * l;
  for (int k = 0; k < l; ++k) put_rot6(h.rotation(state.link_poses[spec.observed_links[k]].rotation), p + 6 * k);
  p += 6 * l;
  write_sensor(prev, h, headset_only, p);
  write_sensor(cur, h, headset_only, p + kSensorDim);
  return obs;
}

VecX build_critic_obs(const VecX& policy_obs, const std::vector<const MocapFrame*>& window,
                      const HeadingFrame& heading, double root_scale, bool scale_horizontal) {
  int extra = 0;
  for (const MocapFrame* f : window) extra += 9 + 6 * (static_cast<int>(f->joint_rotations.size()) - 1);
  VecX obs(policy_obs.size() + extra);
  obs.head(policy_obs.size()) = policy_obs;
  double* p = obs.data() + policy_obs.size();
  for (const MocapFrame* f : window) {
    Vec3 root = f->root_position;
    root.y() *= root_scale;
    if (scale_horizontal) {
      root.x() *= root_scale;
      root.z() *= root_scale;
    }
    put_vec(heading.point(root), p);
    put_rot6(heading.rotation(f->root_orientation), p + 3);
    p += 9;
    for (std::size_t i = 1; i < f->joint_rotations.size(); ++i, p += 6) put_rot6(f->joint_rotations[i], p);
  }
  return obs;
}

}  // namespace retarget
