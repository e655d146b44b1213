#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "retarget/mocap.hpp"

namespace retarget {

std::vector<Pose> joint_world_poses(const HumanSkeleton& skeleton, const MocapFrame& frame) {
  std::vector<Pose> poses(skeleton.size());
  if (skeleton.size() == 0) return poses;
  poses[0] = Pose{frame.root_orientation, frame.root_position};
  for (int j = 1; j < skeleton.size(); ++j) {
    const auto& joint = skeleton.joints[j];
    poses[j] = poses[joint.parent] * Pose{frame.joint_rotations[j], joint.offset};
  }
  return poses;
}

MotionClip resample(const MotionClip& clip, double target_fps) {
  if (!(target_fps > 0.0)) throw std::invalid_argument("resample: target fps must be positive");
  if (clip.num_frames() < 2) throw std::invalid_argument("resample: clip needs at least two frames");

  MotionClip out;
  out.fps = target_fps;
  out.skeleton = clip.skeleton;
  out.subject_height = clip.subject_height;

  const double duration = clip.duration();
  const int count = static_cast<int>(std::floor(duration * target_fps + 1e-9)) + 1;
  out.frames.reserve(count);
  const int last = clip.num_frames() - 1;
  for (int k = 0; k < count; ++k) {
    const double t = k / target_fps;
    const double u = t * clip.fps;
    int i = static_cast<int>(std::floor(u + 1e-9));
    double alpha = u - i;
    if (i >= last) {
      i = last;
      alpha = 0.0;
    }
    if (std::abs(alpha) < 1e-9) {
      MocapFrame f = clip.frames[i];
      f.time = t;
      out.frames.push_back(std::move(f));
      continue;
    }
    const MocapFrame& a = clip.frames[i];
    const MocapFrame& b = clip.frames[i + 1];
    MocapFrame f;
    f.time = t;
    f.root_position = (1.0 - alpha) * a.root_position + alpha * b.root_position;
    f.root_orientation = a.root_orientation.slerp(alpha, b.root_orientation).normalized();
    f.joint_rotations.resize(a.joint_rotations.size());
    for (std::size_t j = 0; j < a.joint_rotations.size(); ++j)
      f.joint_rotations[j] = a.joint_rotations[j].slerp(alpha, b.joint_rotations[j]).normalized();
    out.frames.push_back(std::move(f));
  }
  return out;
}

std::vector<SensorFrame> synthesize_sensors(const MotionClip& clip, const DeviceOffsets& offsets,
                                            const HumanJointNames& names) {
  const int head = clip.skeleton.index_of(names.head);
  const int left = clip.skeleton.index_of(names.left_wrist);
  const int right = clip.skeleton.index_of(names.right_wrist);
  std::vector<SensorFrame> out;
  out.reserve(clip.frames.size());
  for (const auto& frame : clip.frames) {
    const auto poses = joint_world_poses(clip.skeleton, frame);
    const Pose h = poses[head] * offsets.hmd;
    const Pose l = poses[left] * offsets.left;
    const Pose r = poses[right] * offsets.right;
    SensorFrame s;
    s.hmd_pos = h.translation;
    s.hmd_rot = h.rotation.normalized();
    s.left_pos = l.translation;
    s.left_rot = l.rotation.normalized();
    s.right_pos = r.translation;
    s.right_rot = r.rotation.normalized();
    out.push_back(s);
  }
  return out;
}

ContactLabels label_contacts(const MotionClip& clip, double height_thresh, double speed_thresh,
                             const HumanJointNames& names) {
  const int lf = clip.skeleton.index_of(names.left_foot);
  const int rf = clip.skeleton.index_of(names.right_foot);
  const int n = clip.num_frames();
  std::vector<Vec3> lpos(n), rpos(n);
  for (int i = 0; i < n; ++i) {
    const auto poses = joint_world_poses(clip.skeleton, clip.frames[i]);
    lpos[i] = poses[lf].translation;
    rpos[i] = poses[rf].translation;
  }
  auto velocity = [&](const std::vector<Vec3>& p, int i) -> Vec3 {
    if (n < 2) return Vec3::Zero();
    if (i == 0) return (p[1] - p[0]) * clip.fps;
    if (i == n - 1) return (p[n - 1] - p[n - 2]) * clip.fps;
    return (p[i + 1] - p[i - 1]) * (0.5 * clip.fps);
  };
  ContactLabels labels;
  labels.left_foot.resize(n);
  labels.right_foot.resize(n);
  for (int i = 0; i < n; ++i) {
    labels.left_foot[i] = lpos[i].y() < height_thresh && velocity(lpos, i).norm() < speed_thresh;
    labels.right_foot[i] = rpos[i].y() < height_thresh && velocity(rpos, i).norm() < speed_thresh;
  }
  return labels;
}

MotionClip transform_clip(const MotionClip& clip, double yaw, const Vec3& translation) {
  MotionClip out = clip;
  const Quat r = axis_angle(up_axis(), yaw);
  for (auto& f : out.frames) {
    f.root_position = r * f.root_position + translation;
    f.root_orientation = (r * f.root_orientation).normalized();
  }
  return out;
}

void remap_joint_names(MotionClip& clip, const std::map<std::string, std::string>& remap) {
  for (auto& j : clip.skeleton.joints) {
    auto it = remap.find(j.name);
    if (it != remap.end()) j.name = it->second;
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& s, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw ParseError("bad number '" + s + "'", line);
  return v;
}

GaitParams parse_gait(const std::string& spec, int line) {
  GaitParams g;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("gait entry '" + item + "' needs key=value", line);
    const std::string key = item.substr(0, eq);
    const double v = parse_double(item.substr(eq + 1), line);
    if (key == "stride") g.stride_length = v;
    else if (key == "period") g.period = v;
    else if (key == "duration") g.duration = v;
    else if (key == "height") g.subject_height = v;
    else if (key == "fps") g.fps = v;
    else if (key == "heading") g.heading = v;
    else if (key == "duty") g.duty_factor = v;
    else throw ParseError("unknown gait key '" + key + "'", line);
  }
  return g;
}

}  // namespace

std::vector<ClipEntry> parse_manifest(std::string_view text, const std::string& base_dir) {
  std::vector<ClipEntry> entries;
  std::stringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    const std::string content = trim(raw);
    if (content.empty()) continue;

    ClipEntry entry;
    if (content.rfind("gait:", 0) == 0) {
      entry.gait = parse_gait(content.substr(5), line);
      entry.subject_height = entry.gait->subject_height;
      entry.path = content;
      entries.push_back(std::move(entry));
      continue;
    }

    std::stringstream fields(content);
    std::string path, height;
    fields >> path >> height;
    if (height.empty()) throw ParseError("clip entry needs '<path> <subject_height>'", line);
    std::filesystem::path p(path);
    entry.path = p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).string();
    entry.subject_height = parse_double(height, line);
    if (!(entry.subject_height > 0.0)) throw ParseError("subject height must be positive", line);
    std::string opt;
    while (fields >> opt) {
      if (opt == "zup") {
        entry.bvh.z_up = true;
      } else if (opt.rfind("scale=", 0) == 0) {
        entry.bvh.unit_scale = parse_double(opt.substr(6), line);
      } else if (const auto eq = opt.find('='); eq != std::string::npos) {
        entry.remap[opt.substr(0, eq)] = opt.substr(eq + 1);
      } else {
        throw ParseError("unknown clip option '" + opt + "'", line);
      }
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ClipEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open clip manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), std::filesystem::path(path).parent_path().string());
}

MotionClip load_clip(const ClipEntry& entry) {
  if (entry.gait) {
    MotionClip clip = generate_gait(*entry.gait);
    clip.name = entry.path;
    return clip;
  }
  BvhData data = load_bvh(entry.path, entry.bvh);
  remap_joint_names(data.clip, entry.remap);
  data.clip.subject_height = entry.subject_height;
  data.clip.name = std::filesystem::path(entry.path).stem().string();
  return data.clip;
}

}  // namespace retarget
