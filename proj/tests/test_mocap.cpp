#include <doctest.h>

#include <cmath>

#include "retarget/mocap.hpp"

using namespace retarget;

namespace {

const char* kTwoJoint = R"(HIERARCHY
ROOT Hips
{
  OFFSET 0.0 0.9 0.0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Head
  {
    OFFSET 0.0 0.5 0.0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0.0 0.2 0.0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.0333333
0 0 0 0 0 0 0 0 0
)";

std::string three_joint(const std::string& rows, int frames) {
  return std::string(R"(HIERARCHY
ROOT Hips
{
  OFFSET 0 1 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Spine
  {
    OFFSET 0 0.2 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    JOINT Neck
    {
      OFFSET 0 0.3 0
      CHANNELS 3 Zrotation Xrotation Yrotation
      End Site
      {
        OFFSET 0 0.1 0
      }
    }
  }
}
MOTION
Frames: )") + std::to_string(frames) + "\nFrame Time: 0.05\n" + rows;
}

bool quat_close(const Quat& a, const Quat& b, double tol) {
  return std::min((a.coeffs() - b.coeffs()).norm(), (a.coeffs() + b.coeffs()).norm()) < tol;
}

/// Human skeleton with the three tracked joints and both feet, all at the
/// root so tests can place them directly.
MotionClip tracked_clip(int frames) {
  MotionClip clip;
  clip.fps = 30.0;
  clip.skeleton = standard_human_skeleton(1.8);
  for (int i = 0; i < frames; ++i) {
    MocapFrame f;
    f.time = i / 30.0;
    f.root_position = Vec3(0.1 * i, 1.0, 0.02 * i);
    f.root_orientation = axis_angle(Vec3(0.2, 1.0, 0.1), 0.3 + 0.05 * i);
    f.joint_rotations.assign(clip.skeleton.size(), Quat::Identity());
    for (int j = 1; j < clip.skeleton.size(); ++j)
      f.joint_rotations[j] = axis_angle(Vec3(std::sin(j), std::cos(j), 0.3), 0.1 * j + 0.01 * i);
    clip.frames.push_back(f);
  }
  return clip;
}

/// One-joint "foot" clip sampled at 100 fps.
MotionClip foot_clip(const std::vector<Vec3>& positions) {
  MotionClip clip;
  clip.fps = 100.0;
  HumanJoint root;
  root.name = "Hips";
  clip.skeleton.joints.push_back(root);
  for (const char* name : {"LeftFoot", "RightFoot"}) {
    HumanJoint j;
    j.name = name;
    j.parent = 0;
    clip.skeleton.joints.push_back(j);
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    MocapFrame f;
    f.root_position = positions[i];
    f.joint_rotations.assign(3, Quat::Identity());
    clip.frames.push_back(f);
  }
  return clip;
}

}  // namespace

TEST_CASE("two-joint BVH with zero channels decodes to identity rotations and root at offset") {
  const BvhData data = parse_bvh(kTwoJoint);
  REQUIRE(data.skeleton.size() == 2);
  REQUIRE(data.clip.num_frames() == 1);
  CHECK(data.clip.fps == doctest::Approx(30.0).epsilon(1e-5));
  const MocapFrame& f = data.clip.frames[0];
  CHECK((f.root_position - Vec3(0.0, 0.9, 0.0)).norm() < 1e-12);
  CHECK(quat_close(f.root_orientation, Quat::Identity(), 1e-12));
  CHECK(quat_close(f.joint_rotations[1], Quat::Identity(), 1e-12));
  CHECK(data.skeleton.joints[1].end_site.has_value());
  CHECK(data.skeleton.joints[1].parent == 0);
}

TEST_CASE("frame count mismatch is reported with a line number") {
  const std::string text = three_joint("0 0 0 0 0 0 0 0 0 0 0 0\n0 0 0 0 0 0 0 0 0 0 0 0\n", 3);
  try {
    parse_bvh(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("frame count mismatch") != std::string::npos);
    CHECK(e.line() > 0);
  }
}

TEST_CASE("channel-count mismatch and non-numeric rows name the offending line") {
  const std::string short_row = three_joint("0 0 0 0 0 0 0 0 0 0 0 0\n0 0 0\n", 2);
  try {
    parse_bvh(short_row);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 25);
    CHECK(std::string(e.what()).find("channel-count mismatch") != std::string::npos);
  }
  const std::string bad = three_joint("0 0 0 0 0 0 0 0 0 0 abc 0\n", 1);
  try {
    parse_bvh(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 24);
    CHECK(std::string(e.what()).find("abc") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_bvh("HIERARCHY\nROOT Hips\n{\n  OFFSET 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_bvh("MOTION\n"), ParseError);
}

TEST_CASE("Zrotation 90 decodes to a quarter turn about z") {
  const BvhData data = parse_bvh(three_joint("0 0 0 0 0 0 90 0 0 0 0 0\n", 1));
  const Quat expected(std::sqrt(0.5), 0.0, 0.0, std::sqrt(0.5));
  CHECK(quat_close(data.clip.frames[0].joint_rotations[1], expected, 1e-12));
  CHECK(quat_close(data.clip.frames[0].joint_rotations[2], Quat::Identity(), 1e-12));
}

TEST_CASE("Euler channels compose in the declared order") {
  // Z 90 then X 90 (intrinsic): hand-multiplied (c,0,0,c)(c,c,0,0) = (1/2)(1,1,1,1).
  const BvhData data = parse_bvh(three_joint("0 0 0 0 0 0 90 90 0 0 0 0\n", 1));
  const Quat expected(0.5, 0.5, 0.5, 0.5);
  CHECK(quat_close(data.clip.frames[0].joint_rotations[1], expected, 1e-12));
}

TEST_CASE("z-up files are converted to y-up") {
  const std::string text = R"(HIERARCHY
ROOT Hips
{
  OFFSET 0 0 1
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  End Site
  {
    OFFSET 0 0 0.5
  }
}
MOTION
Frames: 1
Frame Time: 0.1
0 2 0 0 0 0
)";
  BvhOptions opts;
  opts.z_up = true;
  const BvhData data = parse_bvh(text, opts);
  // (x, y, z)_zup -> (x, z, -y)
  CHECK((data.clip.frames[0].root_position - Vec3(0.0, 1.0, -2.0)).norm() < 1e-12);
  CHECK((*data.skeleton.joints[0].end_site - Vec3(0.0, 0.5, 0.0)).norm() < 1e-12);
}

TEST_CASE("parse, serialize, parse is a fixed point") {
  const MotionClip clip = tracked_clip(4);
  const std::string once = serialize_bvh(clip, 6);
  const BvhData a = parse_bvh(once);
  const std::string twice = serialize_bvh(a.clip, 6);
  const BvhData b = parse_bvh(twice);
  CHECK(once.size() > 100);
  REQUIRE(a.clip.num_frames() == b.clip.num_frames());
  CHECK(twice == serialize_bvh(b.clip, 6));
  for (int i = 0; i < a.clip.num_frames(); ++i) {
    CHECK((a.clip.frames[i].root_position - b.clip.frames[i].root_position).norm() < 1e-5);
    for (int j = 1; j < a.skeleton.size(); ++j)
      CHECK(quat_close(a.clip.frames[i].joint_rotations[j], b.clip.frames[i].joint_rotations[j], 1e-5));
    // and the first parse matches the source clip to printed precision
    for (int j = 1; j < a.skeleton.size(); ++j)
      CHECK(quat_close(a.clip.frames[i].joint_rotations[j], clip.frames[i].joint_rotations[j], 1e-5));
    CHECK(quat_close(a.clip.frames[i].root_orientation, clip.frames[i].root_orientation, 1e-5));
  }
}

TEST_CASE("resample") {
  SUBCASE("same rate is identity") {
    const MotionClip clip = tracked_clip(5);
    const MotionClip out = resample(clip, 30.0);
    REQUIRE(out.num_frames() == clip.num_frames());
    for (int i = 0; i < 5; ++i) {
      CHECK(out.frames[i].root_position == clip.frames[i].root_position);
      CHECK(out.frames[i].root_orientation.coeffs() == clip.frames[i].root_orientation.coeffs());
    }
  }
  SUBCASE("midpoint of a two-frame clip") {
    MotionClip clip = tracked_clip(2);
    clip.frames[0].root_position = Vec3::Zero();
    clip.frames[1].root_position = Vec3(1.0, 0.0, 0.0);
    clip.frames[0].joint_rotations[1] = Quat::Identity();
    clip.frames[1].joint_rotations[1] = axis_angle(Vec3::UnitZ(), kPi / 2.0);
    const MotionClip out = resample(clip, 60.0);
    REQUIRE(out.num_frames() == 3);
    CHECK(out.frames[1].root_position.x() == doctest::Approx(0.5).epsilon(1e-12));
    // slerp closed form: halfway between identity and 90 deg about z is 45 deg about z
    const Quat expected(std::cos(kPi / 8.0), 0.0, 0.0, std::sin(kPi / 8.0));
    CHECK(quat_close(out.frames[1].joint_rotations[1], expected, 1e-12));
  }
  SUBCASE("duration preserved within one output frame") {
    const MotionClip gait = generate_gait({.stride_length = 0.8, .period = 1.0, .duration = 2.3});
    const MotionClip out = resample(gait, 36.0);
    CHECK(std::abs(out.duration() - gait.duration()) <= 1.0 / 36.0);
    for (const auto& f : out.frames)
      for (const auto& q : f.joint_rotations) CHECK(std::abs(q.norm() - 1.0) < 1e-6);
  }
  SUBCASE("errors") {
    CHECK_THROWS(resample(tracked_clip(1), 30.0));
    CHECK_THROWS(resample(tracked_clip(3), 0.0));
  }
}

TEST_CASE("synthesize_sensors") {
  SUBCASE("zero offsets reproduce joint world poses") {
    const MotionClip clip = tracked_clip(3);
    DeviceOffsets zero;
    zero.hmd = Pose{};
    const auto sensors = synthesize_sensors(clip, zero);
    const int head = clip.skeleton.index_of("Head");
    const int lh = clip.skeleton.index_of("LeftHand");
    for (int i = 0; i < 3; ++i) {
      const auto poses = joint_world_poses(clip.skeleton, clip.frames[i]);
      CHECK((sensors[i].hmd_pos - poses[head].translation).norm() < 1e-12);
      CHECK((sensors[i].left_pos - poses[lh].translation).norm() < 1e-12);
      CHECK(quat_close(sensors[i].hmd_rot, poses[head].rotation, 1e-12));
    }
  }
  SUBCASE("headset offset 0.10 m along head forward") {
    MotionClip clip;
    for (const char* name : {"Head", "LeftHand", "RightHand"}) {
      HumanJoint j;
      j.name = name;
      j.parent = clip.skeleton.size() == 0 ? -1 : 0;
      clip.skeleton.joints.push_back(j);
    }
    MocapFrame f;
    f.joint_rotations.assign(3, Quat::Identity());
    clip.frames.push_back(f);
    const auto sensors = synthesize_sensors(clip);
    CHECK((sensors[0].hmd_pos - Vec3(0.0, 0.0, 0.10)).norm() < 1e-12);
    CHECK(sensors[0].left_pos.norm() < 1e-12);
  }
  SUBCASE("yaw equivariance") {
    const MotionClip clip = tracked_clip(3);
    const double yaw = 0.7;
    const MotionClip rotated = transform_clip(clip, yaw, Vec3::Zero());
    const auto a = synthesize_sensors(clip);
    const auto b = synthesize_sensors(rotated);
    const Quat r = axis_angle(Vec3::UnitY(), yaw);
    for (int i = 0; i < 3; ++i) {
      CHECK((r * a[i].hmd_pos - b[i].hmd_pos).norm() < 1e-12);
      CHECK((r * a[i].right_pos - b[i].right_pos).norm() < 1e-12);
      CHECK(quat_close(r * a[i].left_rot, b[i].left_rot, 1e-12));
    }
  }
  SUBCASE("missing joint is named in the error") {
    MotionClip clip = tracked_clip(1);
    clip.skeleton.joints[clip.skeleton.index_of("Head")].name = "Skull";
    try {
      synthesize_sensors(clip);
      FAIL("expected an error");
    } catch (const std::out_of_range& e) {
      CHECK(std::string(e.what()).find("Head") != std::string::npos);
    }
  }
}

TEST_CASE("label_contacts thresholds") {
  SUBCASE("static feet at 0.05 m are in contact") {
    const auto labels = label_contacts(foot_clip(std::vector<Vec3>(10, Vec3(0.0, 0.05, 0.0))));
    for (int i = 0; i < 10; ++i) CHECK((labels.left_foot[i] && labels.right_foot[i]));
  }
  SUBCASE("moving at 1 m/s is not contact") {
    std::vector<Vec3> p;
    for (int i = 0; i < 10; ++i) p.emplace_back(0.01 * i, 0.05, 0.0);
    const auto labels = label_contacts(foot_clip(p));
    for (int i = 0; i < 10; ++i) CHECK_FALSE(labels.left_foot[i]);
  }
  SUBCASE("stationary at 0.30 m is not contact") {
    const auto labels = label_contacts(foot_clip(std::vector<Vec3>(10, Vec3(0.0, 0.30, 0.0))));
    for (int i = 0; i < 10; ++i) CHECK_FALSE(labels.right_foot[i]);
  }
  SUBCASE("invariant to yaw and horizontal translation") {
    const MotionClip gait = generate_gait({.stride_length = 0.7, .period = 1.1, .duration = 3.0});
    const auto a = label_contacts(gait);
    const auto b = label_contacts(transform_clip(gait, 1.3, Vec3(4.0, 0.0, -2.0)));
    CHECK(a.left_foot == b.left_foot);
    CHECK(a.right_foot == b.right_foot);
  }
}

TEST_CASE("generate_gait") {
  SUBCASE("one period advances the root by one stride") {
    const GaitParams p{.stride_length = 0.8, .period = 1.0, .duration = 1.0};
    const MotionClip clip = generate_gait(p);
    const Vec3 d = clip.frames.back().root_position - clip.frames.front().root_position;
    CHECK(d.norm() == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(std::abs(d.y()) < 1e-12);
  }
  SUBCASE("labelled contacts agree with the analytic phases") {
    for (double heading : {0.0, 0.9}) {
      const GaitParams p{.stride_length = 0.8, .period = 1.0, .duration = 10.0, .heading = heading};
      const auto labels = label_contacts(generate_gait(p));
      const auto truth = gait_contact_phases(p);
      int agree = 0;
      const int n = static_cast<int>(truth.left_foot.size());
      for (int i = 0; i < n; ++i) {
        agree += labels.left_foot[i] == truth.left_foot[i];
        agree += labels.right_foot[i] == truth.right_foot[i];
      }
      CHECK(agree >= 0.95 * 2 * n);
    }
  }
  SUBCASE("stance feet stay planted") {
    const GaitParams p{.stride_length = 0.6, .period = 1.2, .duration = 3.0};
    const MotionClip clip = generate_gait(p);
    const auto truth = gait_contact_phases(p);
    const int lf = clip.skeleton.index_of("LeftFoot");
    for (int i = 1; i < clip.num_frames(); ++i) {
      if (!(truth.left_foot[i] && truth.left_foot[i - 1])) continue;
      const Vec3 a = joint_world_poses(clip.skeleton, clip.frames[i - 1])[lf].translation;
      const Vec3 b = joint_world_poses(clip.skeleton, clip.frames[i])[lf].translation;
      CHECK((a - b).norm() < 1e-9);
    }
  }
  SUBCASE("zero stride stands still with both feet down") {
    const GaitParams p{.stride_length = 0.0, .period = 1.0, .duration = 2.0};
    const MotionClip clip = generate_gait(p);
    CHECK((clip.frames.back().root_position - clip.frames.front().root_position).norm() < 1e-12);
    const auto labels = label_contacts(clip);
    for (std::size_t i = 0; i < labels.left_foot.size(); ++i) CHECK((labels.left_foot[i] && labels.right_foot[i]));
  }
  SUBCASE("invalid parameters") {
    CHECK_THROWS(generate_gait({.period = 0.0}));
    CHECK_THROWS(generate_gait({.duration = -1.0}));
    CHECK_THROWS(generate_gait({.stride_length = -0.1}));
  }
}

TEST_CASE("clip manifest") {
  const auto entries = parse_manifest(R"(# comment
walk.bvh 1.75 zup scale=0.01 LeftWrist=LeftHand
gait:stride=0.6,period=1.2,duration=10
)",
                                      "/data");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].path == "/data/walk.bvh");
  CHECK(entries[0].subject_height == 1.75);
  CHECK(entries[0].bvh.z_up);
  CHECK(entries[0].bvh.unit_scale == 0.01);
  CHECK(entries[0].remap.at("LeftWrist") == "LeftHand");
  REQUIRE(entries[1].gait.has_value());
  CHECK(entries[1].gait->stride_length == 0.6);
  CHECK(entries[1].gait->period == 1.2);
  CHECK_THROWS_AS(parse_manifest("walk.bvh\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest("gait:stride=abc\n"), ParseError);
}
