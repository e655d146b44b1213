#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "retarget/math.hpp"

namespace retarget {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

struct HumanJoint {
  std::string name;
  int parent = -1;
  Vec3 offset = Vec3::Zero();
  std::vector<Channel> channels;
  std::optional<Vec3> end_site;
};

/// Joint hierarchy of a mocap file. Joint 0 is the root; parents precede
/// children.
struct HumanSkeleton {
  std::vector<HumanJoint> joints;

  int size() const { return static_cast<int>(joints.size()); }
  /// -1 if absent.
  int find(std::string_view name) const;
  /// Throws std::out_of_range naming the joint if absent.
  int index_of(std::string_view name) const;
  std::vector<std::string> names() const;
};

/// joint_rotations holds the local rotation of every skeleton joint; entry 0
/// (the root) stays identity because the root rotation lives in
/// root_orientation.
struct MocapFrame {
  Vec3 root_position = Vec3::Zero();
  Quat root_orientation = Quat::Identity();
  std::vector<Quat> joint_rotations;
  double time = 0.0;
};

struct MotionClip {
  std::string name;
  double fps = 30.0;
  std::vector<MocapFrame> frames;
  HumanSkeleton skeleton;
  double subject_height = 1.8;

  int num_frames() const { return static_cast<int>(frames.size()); }
  double duration() const { return frames.empty() ? 0.0 : (num_frames() - 1) / fps; }
  std::vector<std::string> skeleton_joint_names() const { return skeleton.names(); }
};

struct SensorFrame {
  Vec3 hmd_pos = Vec3::Zero();
  Vec3 left_pos = Vec3::Zero();
  Vec3 right_pos = Vec3::Zero();
  Quat hmd_rot = Quat::Identity();
  Quat left_rot = Quat::Identity();
  Quat right_rot = Quat::Identity();
};

struct ContactLabels {
  std::vector<bool> left_foot;
  std::vector<bool> right_foot;
};

/// Canonical joint names the pipeline looks up; clip manifests remap file
/// names onto these.
struct HumanJointNames {
  std::string head = "Head";
  std::string left_wrist = "LeftHand";
  std::string right_wrist = "RightHand";
  std::string left_foot = "LeftFoot";
  std::string right_foot = "RightFoot";
};

/// Rigid offsets from the tracked joints to the emulated devices, expressed
/// in the joint's local frame. These are calibration knobs.
struct DeviceOffsets {
  Pose hmd{Quat::Identity(), Vec3(0.0, 0.0, 0.10)};
  Pose left{};
  Pose right{};
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct BvhOptions {
  bool z_up = false;        ///< convert a z-up file into the internal y-up frame
  double unit_scale = 1.0;  ///< e.g. 0.01 for centimetre files
};

struct BvhData {
  HumanSkeleton skeleton;
  MotionClip clip;
};

BvhData parse_bvh(std::string_view text, const BvhOptions& options = {});
BvhData load_bvh(const std::string& path, const BvhOptions& options = {});
/// Writes the clip back using each joint's declared channel layout. Values
/// are printed with `precision` decimals.
std::string serialize_bvh(const MotionClip& clip, int precision = 6);

/// Rotation for a sequence of Euler channels (degrees), composed in the
/// declared order.
Quat euler_channels_to_quat(const std::vector<Channel>& channels, const std::vector<double>& values);
/// Inverse of euler_channels_to_quat for the rotation channels in `channels`.
std::vector<double> quat_to_euler_channels(const std::vector<Channel>& channels, const Quat& q);

/// World pose of each joint (rotation accumulated, translation = joint origin).
std::vector<Pose> joint_world_poses(const HumanSkeleton& skeleton, const MocapFrame& frame);

MotionClip resample(const MotionClip& clip, double target_fps);

std::vector<SensorFrame> synthesize_sensors(const MotionClip& clip, const DeviceOffsets& offsets = {},
                                            const HumanJointNames& names = {});

ContactLabels label_contacts(const MotionClip& clip, double height_thresh = 0.20,
                             double speed_thresh = 0.4, const HumanJointNames& names = {});

/// Rotates the clip by `yaw` about +y and then translates it.
MotionClip transform_clip(const MotionClip& clip, double yaw, const Vec3& translation);

/// Renames joints in place; unknown source names are ignored.
void remap_joint_names(MotionClip& clip, const std::map<std::string, std::string>& remap);

// ---------------------------------------------------------------------------
// Procedural walking clips.

struct GaitParams {
  double stride_length = 0.8;  ///< root advance per gait cycle (m)
  double period = 1.0;         ///< gait cycle duration (s)
  double subject_height = 1.8;
  double duration = 10.0;
  double fps = 120.0;
  double duty_factor = 0.6;  ///< stance fraction of the cycle per foot
  double heading = 0.0;      ///< walking direction yaw (rad)
};

/// LaFAN1-style 22-joint skeleton in a y-up, +z-forward rest pose with the
/// arms hanging down, scaled to `height`.
HumanSkeleton standard_human_skeleton(double height);

MotionClip generate_gait(const GaitParams& params);
/// Analytic stance phases of generate_gait(params), one entry per frame.
ContactLabels gait_contact_phases(const GaitParams& params);

// ---------------------------------------------------------------------------
// Clip manifests: one clip per line.
//
//   <path> <subject_height> [zup] [scale=<s>] [<FileName>=<CanonicalName> ...]
//   gait:stride=0.6,period=1.2,duration=10[,height=1.8][,fps=120][,heading=0]
//
// '#' starts a comment. Relative paths resolve against the manifest's folder.

struct ClipEntry {
  std::string path;
  double subject_height = 1.8;
  BvhOptions bvh;
  std::map<std::string, std::string> remap;
  std::optional<GaitParams> gait;
};

std::vector<ClipEntry> parse_manifest(std::string_view text, const std::string& base_dir = ".");
std::vector<ClipEntry> load_manifest(const std::string& path);
MotionClip load_clip(const ClipEntry& entry);

}  // namespace retarget
