#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "retarget/mocap.hpp"

namespace retarget {
namespace {

struct Token {
  std::string text;
  int line = 0;
};

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view text) : text_(text) {}

  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }

  Token next() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of file", line_);
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return {std::string(text_.substr(start, pos_ - start)), line_};
  }

  Token expect(std::string_view word) {
    Token t = next();
    if (t.text != word) {
      throw ParseError("expected '" + std::string(word) + "' but found '" + t.text + "'", t.line);
    }
    return t;
  }

  double number() {
    Token t = next();
    return to_double(t);
  }

  static double to_double(const Token& t) {
    double v = 0.0;
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
      throw ParseError("non-numeric value '" + t.text + "'", t.line);
    }
    return v;
  }

  /// Remaining tokens on the current line (after skipping leading blanks and
  /// empty lines). Returns the line number of the row.
  int rest_of_line(std::vector<Token>& out) {
    out.clear();
    skip_space();
    const int row_line = line_;
    while (pos_ < text_.size() && text_[pos_] != '\n') {
      while (pos_ < text_.size() && text_[pos_] != '\n' &&
             std::isspace(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
      if (pos_ >= text_.size() || text_[pos_] == '\n') break;
      const std::size_t start = pos_;
      while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      out.push_back({std::string(text_.substr(start, pos_ - start)), row_line});
    }
    return row_line;
  }

  int line() const { return line_; }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

Channel parse_channel(const Token& t) {
  static const std::map<std::string, Channel> kNames = {
      {"Xposition", Channel::Xposition}, {"Yposition", Channel::Yposition},
      {"Zposition", Channel::Zposition}, {"Xrotation", Channel::Xrotation},
      {"Yrotation", Channel::Yrotation}, {"Zrotation", Channel::Zrotation}};
  auto it = kNames.find(t.text);
  if (it == kNames.end()) throw ParseError("unknown channel '" + t.text + "'", t.line);
  return it->second;
}

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::Xposition: return "Xposition";
    case Channel::Yposition: return "Yposition";
    case Channel::Zposition: return "Zposition";
    case Channel::Xrotation: return "Xrotation";
    case Channel::Yrotation: return "Yrotation";
    case Channel::Zrotation: return "Zrotation";
  }
  return "";
}

bool is_rotation(Channel c) {
  return c == Channel::Xrotation || c == Channel::Yrotation || c == Channel::Zrotation;
}

Vec3 rotation_axis(Channel c) {
  switch (c) {
    case Channel::Xrotation: return Vec3::UnitX();
    case Channel::Yrotation: return Vec3::UnitY();
    default: return Vec3::UnitZ();
  }
}

int position_index(Channel c) {
  switch (c) {
    case Channel::Xposition: return 0;
    case Channel::Yposition: return 1;
    case Channel::Zposition: return 2;
    default: return -1;
  }
}

Vec3 read_vec3(Tokenizer& tok) {
  Vec3 v;
  v.x() = tok.number();
  v.y() = tok.number();
  v.z() = tok.number();
  return v;
}

void read_joint(Tokenizer& tok, HumanSkeleton& skel, int parent, const Token& name) {
  HumanJoint joint;
  joint.name = name.text;
  joint.parent = parent;
  const int index = skel.size();
  tok.expect("{");
  skel.joints.push_back(joint);

  bool have_offset = false;
  while (true) {
    Token t = tok.next();
    if (t.text == "OFFSET") {
      skel.joints[index].offset = read_vec3(tok);
      have_offset = true;
    } else if (t.text == "CHANNELS") {
      Token count_tok = tok.next();
      int count = 0;
      auto [p, ec] = std::from_chars(count_tok.text.data(), count_tok.text.data() + count_tok.text.size(), count);
      if (ec != std::errc() || count < 0 || count > 6) {
        throw ParseError("bad channel count '" + count_tok.text + "'", count_tok.line);
      }
      for (int i = 0; i < count; ++i) skel.joints[index].channels.push_back(parse_channel(tok.next()));
    } else if (t.text == "JOINT") {
      Token child = tok.next();
      read_joint(tok, skel, index, child);
    } else if (t.text == "End") {
      tok.expect("Site");
      tok.expect("{");
      tok.expect("OFFSET");
      skel.joints[index].end_site = read_vec3(tok);
      tok.expect("}");
    } else if (t.text == "}") {
      break;
    } else {
      throw ParseError("unexpected token '" + t.text + "' in joint " + name.text, t.line);
    }
  }
  if (!have_offset) throw ParseError("joint " + name.text + " has no OFFSET", name.line);
}

void convert_z_up(HumanSkeleton& skel, MotionClip& clip) {
  // (x, y, z)_zup -> (x, z, -y)_yup
  const Quat c = axis_angle(Vec3::UnitX(), -kPi / 2.0);
  for (auto& j : skel.joints) {
    j.offset = c * j.offset;
    if (j.end_site) j.end_site = c * *j.end_site;
  }
  const Quat ci = c.conjugate();
  for (auto& f : clip.frames) {
    f.root_position = c * f.root_position;
    f.root_orientation = (c * f.root_orientation * ci).normalized();
    for (auto& r : f.joint_rotations) r = (c * r * ci).normalized();
  }
}

}  // namespace

int HumanSkeleton::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (joints[i].name == name) return i;
  return -1;
}

int HumanSkeleton::index_of(std::string_view name) const {
  const int i = find(name);
  if (i < 0) throw std::out_of_range("skeleton has no joint named '" + std::string(name) + "'");
  return i;
}

std::vector<std::string> HumanSkeleton::names() const {
  std::vector<std::string> out;
  out.reserve(joints.size());
  for (const auto& j : joints) out.push_back(j.name);
  return out;
}

Quat euler_channels_to_quat(const std::vector<Channel>& channels, const std::vector<double>& values) {
  Quat q = Quat::Identity();
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (!is_rotation(channels[i])) continue;
    q = q * axis_angle(rotation_axis(channels[i]), values[i] * kPi / 180.0);
  }
  return q.normalized();
}

std::vector<double> quat_to_euler_channels(const std::vector<Channel>& channels, const Quat& q) {
  std::vector<double> out(channels.size(), 0.0);
  std::vector<std::size_t> rot;
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (is_rotation(channels[i])) rot.push_back(i);
  if (rot.empty()) return out;
  const Mat3 r = q.toRotationMatrix();
  if (rot.size() == 3) {
    auto a = euler_decompose(r, rotation_axis(channels[rot[0]]), rotation_axis(channels[rot[1]]),
                             rotation_axis(channels[rot[2]]));
    for (int k = 0; k < 3; ++k) out[rot[k]] = a[k] * 180.0 / kPi;
  } else if (rot.size() == 2) {
    const Vec3 u1 = rotation_axis(channels[rot[0]]);
    const Vec3 u2 = rotation_axis(channels[rot[1]]);
    auto a = euler_decompose(r, u1, u2, u1.cross(u2));
    out[rot[0]] = a[0] * 180.0 / kPi;
    out[rot[1]] = a[1] * 180.0 / kPi;
  } else {
    out[rot[0]] = twist_angle(q, rotation_axis(channels[rot[0]])) * 180.0 / kPi;
  }
  return out;
}

BvhData parse_bvh(std::string_view text, const BvhOptions& options) {
  Tokenizer tok(text);
  BvhData data;
  HumanSkeleton& skel = data.skeleton;

  tok.expect("HIERARCHY");
  tok.expect("ROOT");
  Token root_name = tok.next();
  read_joint(tok, skel, -1, root_name);

  tok.expect("MOTION");
  tok.expect("Frames:");
  Token frames_tok = tok.next();
  int declared = 0;
  {
    auto [p, ec] = std::from_chars(frames_tok.text.data(), frames_tok.text.data() + frames_tok.text.size(), declared);
    if (ec != std::errc() || declared < 0) throw ParseError("bad frame count '" + frames_tok.text + "'", frames_tok.line);
  }
  tok.expect("Frame");
  tok.expect("Time:");
  Token dt_tok = tok.next();
  const double frame_time = Tokenizer::to_double(dt_tok);
  if (frame_time <= 0.0) throw ParseError("frame time must be positive", dt_tok.line);

  std::size_t total_channels = 0;
  for (const auto& j : skel.joints) total_channels += j.channels.size();

  MotionClip& clip = data.clip;
  clip.fps = 1.0 / frame_time;
  clip.frames.reserve(declared);

  std::vector<Token> row;
  std::vector<double> values;
  while (!tok.done()) {
    const int line = tok.rest_of_line(row);
    if (row.empty()) continue;
    if (row.size() != total_channels) {
      throw ParseError("channel-count mismatch: expected " + std::to_string(total_channels) + " values, found " +
                           std::to_string(row.size()),
                       line);
    }
    if (static_cast<int>(clip.frames.size()) >= declared) {
      throw ParseError("frame count mismatch: more motion rows than the declared " + std::to_string(declared), line);
    }
    values.clear();
    for (const auto& t : row) values.push_back(Tokenizer::to_double(t));

    MocapFrame frame;
    frame.time = clip.frames.size() * frame_time;
    frame.joint_rotations.assign(skel.size(), Quat::Identity());
    std::size_t cursor = 0;
    for (int j = 0; j < skel.size(); ++j) {
      const auto& channels = skel.joints[j].channels;
      std::vector<double> local(values.begin() + cursor, values.begin() + cursor + channels.size());
      cursor += channels.size();
      const Quat q = euler_channels_to_quat(channels, local);
      if (j == 0) {
        Vec3 pos = skel.joints[0].offset;
        for (std::size_t c = 0; c < channels.size(); ++c) {
          const int axis = position_index(channels[c]);
          if (axis >= 0) pos[axis] += local[c];
        }
        frame.root_position = pos;
        frame.root_orientation = q;
      } else {
        frame.joint_rotations[j] = q;
      }
    }
    clip.frames.push_back(std::move(frame));
  }
  if (static_cast<int>(clip.frames.size()) != declared) {
    throw ParseError("frame count mismatch: declared " + std::to_string(declared) + ", found " +
                         std::to_string(clip.frames.size()),
                     tok.line());
  }

  // The root OFFSET is folded into root_position; keep it in the skeleton
  // only as metadata so serialization can reproduce it.
  if (options.unit_scale != 1.0) {
    for (auto& j : skel.joints) {
      j.offset *= options.unit_scale;
      if (j.end_site) *j.end_site *= options.unit_scale;
    }
    for (auto& f : clip.frames) f.root_position *= options.unit_scale;
  }
  if (options.z_up) convert_z_up(skel, clip);
  clip.skeleton = skel;
  return data;
}

BvhData load_bvh(const std::string& path, const BvhOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open BVH file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_bvh(ss.str(), options);
}

std::string serialize_bvh(const MotionClip& clip, int precision) {
  const HumanSkeleton& skel = clip.skeleton;
  std::ostringstream out;
  out << std::setprecision(precision) << std::fixed;
  out << "HIERARCHY\n";

  std::vector<std::vector<int>> children(skel.size());
  for (int j = 1; j < skel.size(); ++j) children[skel.joints[j].parent].push_back(j);

  auto write_joint = [&](auto&& self, int j, int depth) -> void {
    const std::string indent(depth * 2, ' ');
    const auto& joint = skel.joints[j];
    out << indent << (j == 0 ? "ROOT " : "JOINT ") << joint.name << "\n" << indent << "{\n";
    out << indent << "  OFFSET " << joint.offset.x() << " " << joint.offset.y() << " " << joint.offset.z() << "\n";
    out << indent << "  CHANNELS " << joint.channels.size();
    for (Channel c : joint.channels) out << " " << channel_name(c);
    out << "\n";
    for (int c : children[j]) self(self, c, depth + 1);
    if (joint.end_site) {
      const Vec3& e = *joint.end_site;
      out << indent << "  End Site\n" << indent << "  {\n";
      out << indent << "    OFFSET " << e.x() << " " << e.y() << " " << e.z() << "\n";
      out << indent << "  }\n";
    }
    out << indent << "}\n";
  };
  write_joint(write_joint, 0, 0);

  out << "MOTION\n";
  out << "Frames: " << clip.frames.size() << "\n";
  out << std::setprecision(9) << "Frame Time: " << 1.0 / clip.fps << "\n";
  out << std::setprecision(precision);
  for (const auto& f : clip.frames) {
    bool first = true;
    for (int j = 0; j < skel.size(); ++j) {
      const auto& channels = skel.joints[j].channels;
      const Quat& q = j == 0 ? f.root_orientation : f.joint_rotations[j];
      std::vector<double> values = quat_to_euler_channels(channels, q);
      if (j == 0) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
          const int axis = position_index(channels[c]);
          if (axis >= 0) values[c] = f.root_position[axis] - skel.joints[0].offset[axis];
        }
      }
      for (double v : values) {
        if (!first) out << " ";
        out << v;
        first = false;
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace retarget
