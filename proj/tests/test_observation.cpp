#include <doctest.h>

#include <cmath>
#include <random>

#include "retarget/observation.hpp"

using namespace retarget;

namespace {

std::string data_path(const std::string& rel) { return std::string(RETARGET_DATA_DIR) + "/" + rel; }

Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
}

SensorFrame random_sensor(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  SensorFrame s;
  s.hmd_pos = Vec3(u(rng), 1.5 + 0.1 * u(rng), u(rng));
  s.left_pos = Vec3(u(rng), 1.0, u(rng));
  s.right_pos = Vec3(u(rng), 1.0, u(rng));
  s.hmd_rot = random_quat(rng);
  s.left_rot = random_quat(rng);
  s.right_rot = random_quat(rng);
  return s;
}

SensorFrame move_sensor(const SensorFrame& s, const Quat& r, const Vec3& t) {
  SensorFrame o = s;
  o.hmd_pos = r * s.hmd_pos + t;
  o.left_pos = r * s.left_pos + t;
  o.right_pos = r * s.right_pos + t;
  o.hmd_rot = r * s.hmd_rot;
  o.left_rot = r * s.left_rot;
  o.right_rot = r * s.right_rot;
  return o;
}

}  // namespace

TEST_CASE("heading frame") {
  HeadingFrame h = heading_frame(Vec3(3, 1, 2), Quat::Identity());
  CHECK(h.origin.isApprox(Vec3(3, 0, 2)));
  CHECK(h.yaw == 0.0);
  h = heading_frame(Vec3::Zero(), axis_angle(Vec3::UnitY(), M_PI / 2));
  CHECK(h.yaw == doctest::Approx(M_PI / 2));
  // forward axis vertical: lateral fallback keeps the yaw
  h = heading_frame(Vec3::Zero(), axis_angle(Vec3::UnitY(), 0.4) * axis_angle(Vec3::UnitX(), -M_PI / 2));
  CHECK(std::isfinite(h.yaw));
  CHECK(h.yaw == doctest::Approx(0.4));
  CHECK(h.point(Vec3(1, 2, 3)).isApprox(axis_angle(Vec3::UnitY(), -0.4) * Vec3(1, 2, 3)));
}

TEST_CASE("golden observation lengths") {
  const struct {
    const char* file;
    int dofs;
    int policy;
  } cases[] = {
      {"characters/mini_jesse.yaml", 32, 2 * 32 + 6 * 9 + 2 * 27},
      {"characters/mini_dino.yaml", 44, 2 * 44 + 6 * 9 + 2 * 27},
      {"characters/mini_oppy.yaml", 58, 2 * 58 + 6 * 9 + 2 * 27},
      {"characters/desk_biped.yaml", 17, 2 * 17 + 6 * 9 + 2 * 27},
  };
  for (const auto& c : cases) {
    const CharacterSpec spec = load_character(data_path(c.file));
    CHECK(spec.num_dofs() == c.dofs);
    const ObsLayout layout = observation_layout(spec, 22, {});
    CHECK(layout.policy_dim == c.policy);
    // five mocap frames of root (9) plus 21 joint rotations (6 each)
    CHECK(layout.critic_dim == c.policy + 5 * (9 + 21 * 6));
    const Simulator sim(spec);
    const VecX obs = build_policy_obs(sim.initial_state(), {}, {}, spec);
    CHECK(obs.size() == layout.policy_dim);
    const ObsLayout sym = observation_layout(spec, 22, {4, false});
    CHECK(sym.critic_dim == sym.policy_dim);
  }
  const CharacterSpec jesse = load_character(data_path("characters/mini_jesse.yaml"));
  CHECK(observation_layout(jesse, 22, {}).policy_dim == 172);
  const std::string m = observation_layout(jesse, 22, {}).manifest();
  CHECK(m.find("joint_angles 0 32") != std::string::npos);
  CHECK(m.find("sensors_cur 145 27") != std::string::npos);
  CHECK(m.find("mocap_t+4_joint_rot6") != std::string::npos);
}

TEST_CASE("observation at the origin equals world quantities") {
  const CharacterSpec jesse = load_character(data_path("characters/mini_jesse.yaml"));
  const Simulator sim(jesse);
  SimState s = sim.initial_state();
  s.q[0] = 0.0;
  s.q[2] = 0.0;
  sim.set_coordinates(s, s.q, s.qd);
  std::mt19937_64 rng(1);
  const SensorFrame a = random_sensor(rng), b = random_sensor(rng);
  const VecX obs = build_policy_obs(s, a, b, jesse);
  const int j = jesse.num_dofs();
  for (int k = 0; k < 6; ++k) {
    const Vec3 p = s.link_poses[jesse.observed_links[k]].translation;
    CHECK((obs.segment<3>(2 * j + 3 * k) - p).norm() < 1e-12);
  }
  const int sensors = 2 * j + 6 * 9;
  CHECK((obs.segment<3>(sensors + kSensorDim) - b.hmd_pos).norm() < 1e-12);
  CHECK((obs.segment<3>(sensors + 3) - a.left_pos).norm() < 1e-12);
  const auto r = rot6(b.right_rot.toRotationMatrix());
  for (int i = 0; i < 6; ++i) CHECK(obs[sensors + kSensorDim + 21 + i] == doctest::Approx(r[i]));

  const VecX one = build_policy_obs(s, a, b, jesse, true);
  for (int i = 3; i < 9; ++i) CHECK(one[sensors + i] == 0.0);
  for (int i = 15; i < 27; ++i) CHECK(one[sensors + kSensorDim + i] == 0.0);
  CHECK(one[sensors + 1] == obs[sensors + 1]);
}

TEST_CASE("observations are invariant to yaw and horizontal translation") {
  const CharacterSpec jesse = load_character(data_path("characters/mini_jesse.yaml"));
  const Simulator sim(jesse);
  GaitParams g;
  g.duration = 1.0;
  g.fps = 36.0;
  const MotionClip clip = generate_gait(g);
  const double scale = 0.7;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    VecX q = sim.initial_state().q;
    VecX qd = VecX::Zero(sim.velocity_dim());
    q.head<3>() = Vec3(5 * u(rng), 0.9 + 0.1 * u(rng), 5 * u(rng));
    set_root_quat(q, random_quat(rng));
    for (int i = kRootPosDim; i < q.size(); ++i) q[i] = 0.5 * u(rng);
    for (int i = 0; i < qd.size(); ++i) qd[i] = u(rng);
    SimState a;
    sim.set_coordinates(a, q, qd);
    const SensorFrame s0 = random_sensor(rng), s1 = random_sensor(rng);
    const int t0 = trial % (clip.num_frames() - 5);
    std::vector<const MocapFrame*> wa;
    for (int k = 0; k < 5; ++k) wa.push_back(&clip.frames[t0 + k]);

    const double yaw = M_PI * u(rng);
    const Vec3 shift(10 * u(rng), 0.0, 10 * u(rng));
    const Quat r = axis_angle(Vec3::UnitY(), yaw);
    VecX q2 = q, qd2 = qd;
    q2.head<3>() = r * q.head<3>() + shift;
    set_root_quat(q2, r * root_quat(q));
    qd2.head<3>() = r * qd.head<3>();
    qd2.segment<3>(3) = r * qd.segment<3>(3);
    SimState b;
    sim.set_coordinates(b, q2, qd2);
    // the critic scales mocap roots, so the clip moves by shift / scale
    const MotionClip moved = transform_clip(clip, yaw, shift / scale);
    std::vector<const MocapFrame*> wb;
    for (int k = 0; k < 5; ++k) wb.push_back(&moved.frames[t0 + k]);

    const VecX pa = build_policy_obs(a, s0, s1, jesse);
    const VecX pb = build_policy_obs(b, move_sensor(s0, r, shift), move_sensor(s1, r, shift), jesse);
    const VecX ca = build_critic_obs(pa, wa, heading_frame(a), scale, true);
    const VecX cb = build_critic_obs(pb, wb, heading_frame(b), scale, true);
    REQUIRE(ca.size() == cb.size());
    worst = std::max(worst, (ca - cb).cwiseAbs().maxCoeff());
    CHECK(ca.allFinite());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("critic window padding and K = 0") {
  const CharacterSpec jesse = load_character(data_path("characters/mini_jesse.yaml"));
  const Simulator sim(jesse);
  const SimState s = sim.initial_state();
  GaitParams g;
  g.duration = 0.5;
  g.fps = 36.0;
  const MotionClip clip = generate_gait(g);
  const VecX p = build_policy_obs(s, {}, {}, jesse);
  const VecX c0 = build_critic_obs(p, {&clip.frames[3]}, heading_frame(s), 1.0, true);
  CHECK(c0.size() == observation_layout(jesse, 22, {0, true}).critic_dim);
  CHECK(c0.head(p.size()) == p);
  const MocapFrame* last = &clip.frames.back();
  const VecX cend = build_critic_obs(p, {last, last, last}, heading_frame(s), 1.0, true);
  const int block = 9 + 21 * 6;
  CHECK(cend.segment(p.size(), block) == cend.segment(p.size() + 2 * block, block));
}

TEST_CASE("sensor scaling") {
  SensorFrame s;
  s.hmd_pos = Vec3(2.0, 1.6, -1.0);
  const SensorFrame a = scale_sensor(s, 0.5, true);
  CHECK(a.hmd_pos.isApprox(Vec3(1.0, 0.8, -0.5)));
  const SensorFrame b = scale_sensor(s, 0.5, false);
  CHECK(b.hmd_pos.isApprox(Vec3(2.0, 0.8, -1.0)));
}
