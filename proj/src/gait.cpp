#include <algorithm>
#include <cmath>

#include "retarget/mocap.hpp"

namespace retarget {
namespace {

const std::vector<Channel> kRootChannels = {Channel::Xposition, Channel::Yposition, Channel::Zposition,
                                            Channel::Zrotation, Channel::Yrotation, Channel::Xrotation};
const std::vector<Channel> kJointChannels = {Channel::Zrotation, Channel::Yrotation, Channel::Xrotation};

// Rest-pose proportions for a 1.8 m subject.
constexpr double kHipLateral = 0.09;
constexpr double kHipDrop = 0.06;
constexpr double kThigh = 0.43;
constexpr double kShin = 0.42;
constexpr double kAnkleHeight = 0.08;

struct LegAngles {
  double hip = 0.0;
  double knee = 0.0;
  double ankle = 0.0;
};

/// Sagittal two-link IK. `dy` and `dz` give the ankle relative to the hip
/// joint in the root frame. Angles are rotations about +x.
LegAngles solve_leg(double dy, double dz, double thigh, double shin) {
  double dist = std::hypot(dy, dz);
  dist = std::clamp(dist, 1e-9, thigh + shin - 1e-9);
  const double cos_knee = (thigh * thigh + shin * shin - dist * dist) / (2.0 * thigh * shin);
  const double knee = kPi - std::acos(std::clamp(cos_knee, -1.0, 1.0));
  const double cos_beta = (thigh * thigh + dist * dist - shin * shin) / (2.0 * thigh * dist);
  const double beta = std::acos(std::clamp(cos_beta, -1.0, 1.0));
  const double forward = std::atan2(dz, -dy);
  LegAngles a;
  a.hip = -(forward + beta);
  a.knee = knee;
  a.ankle = -(a.hip + a.knee);
  return a;
}

void validate(const GaitParams& p) {
  if (!(p.period > 0.0)) throw std::invalid_argument("gait: period must be positive");
  if (!(p.duration > 0.0)) throw std::invalid_argument("gait: duration must be positive");
  if (!(p.subject_height > 0.0)) throw std::invalid_argument("gait: subject height must be positive");
  if (!(p.fps > 0.0)) throw std::invalid_argument("gait: fps must be positive");
  if (p.stride_length < 0.0) throw std::invalid_argument("gait: stride length must be non-negative");
  if (!(p.duty_factor > 0.0 && p.duty_factor < 1.0)) throw std::invalid_argument("gait: duty factor must be in (0, 1)");
  const double s = p.subject_height / 1.8;
  if (p.duty_factor * p.stride_length / 2.0 > 0.9 * (kThigh + kShin) * s)
    throw std::invalid_argument("gait: stride too long for the leg");
}

int frame_count(const GaitParams& p) { return static_cast<int>(std::round(p.duration * p.fps)) + 1; }

struct FootState {
  Vec3 position;  ///< ankle, root-heading frame with origin on the ground at the start
  bool stance;
};

FootState foot_state(const GaitParams& p, double t, double phase_offset, double lateral) {
  const double s = p.subject_height / 1.8;
  const double L = p.stride_length;
  const double d = p.duty_factor;
  const double clearance = std::min(0.12 * s, 0.3 * L);
  const double u = t / p.period + phase_offset;
  const double n = std::floor(u);
  const double phi = u - n;
  const double plant = L * (n - phase_offset + d / 2.0);
  FootState f;
  f.position = Vec3(lateral, kAnkleHeight * s, plant);
  f.stance = phi < d;
  if (!f.stance) {
    const double w = (phi - d) / (1.0 - d);
    f.position.z() = plant + L * 0.5 * (1.0 - std::cos(kPi * w));
    f.position.y() += clearance * std::sin(kPi * w);
  }
  return f;
}

}  // namespace

HumanSkeleton standard_human_skeleton(double height) {
  if (!(height > 0.0)) throw std::invalid_argument("skeleton height must be positive");
  const double s = height / 1.8;
  HumanSkeleton skel;
  auto add = [&](const std::string& name, int parent, Vec3 offset) {
    HumanJoint j;
    j.name = name;
    j.parent = parent;
    j.offset = offset * s;
    j.channels = parent < 0 ? kRootChannels : kJointChannels;
    skel.joints.push_back(j);
    return skel.size() - 1;
  };
  const int hips = add("Hips", -1, Vec3::Zero());
  for (double side : {1.0, -1.0}) {
    const std::string p = side > 0 ? "Left" : "Right";
    const int up = add(p + "UpLeg", hips, Vec3(side * kHipLateral, -kHipDrop, 0.0));
    const int leg = add(p + "Leg", up, Vec3(0.0, -kThigh, 0.0));
    const int foot = add(p + "Foot", leg, Vec3(0.0, -kShin, 0.0));
    const int toe = add(p + "Toe", foot, Vec3(0.0, -0.06, 0.13));
    skel.joints[toe].end_site = Vec3(0.0, 0.0, 0.05) * s;
  }
  const int spine = add("Spine", hips, Vec3(0.0, 0.10, 0.0));
  const int spine1 = add("Spine1", spine, Vec3(0.0, 0.12, 0.0));
  const int spine2 = add("Spine2", spine1, Vec3(0.0, 0.12, 0.0));
  const int neck = add("Neck", spine2, Vec3(0.0, 0.14, 0.0));
  const int head = add("Head", neck, Vec3(0.0, 0.10, 0.0));
  skel.joints[head].end_site = Vec3(0.0, 0.23, 0.0) * s;
  for (double side : {1.0, -1.0}) {
    const std::string p = side > 0 ? "Left" : "Right";
    const int shoulder = add(p + "Shoulder", spine2, Vec3(side * 0.03, 0.10, 0.0));
    const int arm = add(p + "Arm", shoulder, Vec3(side * 0.15, 0.0, 0.0));
    const int fore = add(p + "ForeArm", arm, Vec3(0.0, -0.28, 0.0));
    const int hand = add(p + "Hand", fore, Vec3(0.0, -0.26, 0.0));
    skel.joints[hand].end_site = Vec3(0.0, -0.08, 0.0) * s;
  }
  return skel;
}

MotionClip generate_gait(const GaitParams& p) {
  validate(p);
  const double s = p.subject_height / 1.8;
  const double leg = (kThigh + kShin) * s;
  const double half_reach = p.duty_factor * p.stride_length / 2.0;
  const double hip_height = kAnkleHeight * s + std::sqrt(std::pow(0.98 * leg, 2) - half_reach * half_reach);
  const double root_height = hip_height + kHipDrop * s;
  const double speed = p.stride_length / p.period;

  MotionClip clip;
  clip.fps = p.fps;
  clip.subject_height = p.subject_height;
  clip.skeleton = standard_human_skeleton(p.subject_height);
  const HumanSkeleton& skel = clip.skeleton;
  const Quat heading = axis_angle(up_axis(), p.heading);

  const int n = frame_count(p);
  clip.frames.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = k / p.fps;
    MocapFrame f;
    f.time = t;
    f.joint_rotations.assign(skel.size(), Quat::Identity());
    const Vec3 root_local(0.0, root_height, speed * t);
    f.root_position = heading * root_local;
    f.root_orientation = heading;

    double hip_pitch[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? 1.0 : -1.0;
      const std::string prefix = side == 0 ? "Left" : "Right";
      const FootState foot = foot_state(p, t, side == 0 ? 0.0 : 0.5, sign * kHipLateral * s);
      const double dy = foot.position.y() - hip_height;
      const double dz = foot.position.z() - root_local.z();
      const LegAngles a = solve_leg(dy, dz, kThigh * s, kShin * s);
      f.joint_rotations[skel.index_of(prefix + "UpLeg")] = axis_angle(Vec3::UnitX(), a.hip);
      f.joint_rotations[skel.index_of(prefix + "Leg")] = axis_angle(Vec3::UnitX(), a.knee);
      f.joint_rotations[skel.index_of(prefix + "Foot")] = axis_angle(Vec3::UnitX(), a.ankle);
      hip_pitch[side] = a.hip;
    }
    for (int side = 0; side < 2; ++side) {
      const std::string prefix = side == 0 ? "Left" : "Right";
      f.joint_rotations[skel.index_of(prefix + "Arm")] = axis_angle(Vec3::UnitX(), -0.6 * hip_pitch[side]);
      f.joint_rotations[skel.index_of(prefix + "ForeArm")] = axis_angle(Vec3::UnitX(), -0.25);
    }
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

ContactLabels gait_contact_phases(const GaitParams& p) {
  validate(p);
  const int n = frame_count(p);
  ContactLabels labels;
  labels.left_foot.resize(n);
  labels.right_foot.resize(n);
  for (int k = 0; k < n; ++k) {
    const double t = k / p.fps;
    labels.left_foot[k] = p.stride_length == 0.0 || foot_state(p, t, 0.0, 0.0).stance;
    labels.right_foot[k] = p.stride_length == 0.0 || foot_state(p, t, 0.5, 0.0).stance;
  }
  return labels;
}

}  // namespace retarget
