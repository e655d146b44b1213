#include "retarget/character.hpp"

#include <yaml-cpp/yaml.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace retarget {

const char* to_string(Region r) {
  switch (r) {
    case Region::Upper: return "upper";
    case Region::Lower: return "lower";
    case Region::Tail: return "tail";
    case Region::Ear: return "ear";
  }
  return "";
}

const char* to_string(JointMode m) {
  switch (m) {
    case JointMode::Free: return "free";
    case JointMode::Active: return "active";
    case JointMode::Passive: return "passive";
    case JointMode::Fixed: return "fixed";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Geometry

double Geometry::volume() const {
  switch (type) {
    case GeomType::Sphere: return 4.0 / 3.0 * kPi * radius * radius * radius;
    case GeomType::Capsule: {
      const double len = (p1 - p0).norm();
      return kPi * radius * radius * len + 4.0 / 3.0 * kPi * radius * radius * radius;
    }
    case GeomType::Box: return 8.0 * half_extents.prod();
  }
  return 0.0;
}

Vec3 Geometry::centroid() const { return type == GeomType::Capsule ? 0.5 * (p0 + p1) : p0; }

Mat3 Geometry::inertia(double mass) const {
  switch (type) {
    case GeomType::Sphere: return Mat3::Identity() * (0.4 * mass * radius * radius);
    case GeomType::Box: {
      const Vec3 e = 2.0 * half_extents;
      return Vec3(e.y() * e.y() + e.z() * e.z(), e.x() * e.x() + e.z() * e.z(), e.x() * e.x() + e.y() * e.y())
                 .asDiagonal() *
             (mass / 12.0);
    }
    case GeomType::Capsule: {
      const double r = radius;
      const double len = (p1 - p0).norm();
      const double vc = kPi * r * r * len;
      const double vs = 4.0 / 3.0 * kPi * r * r * r;
      const double mc = mass * vc / (vc + vs);
      const double ms = mass - mc;
      const double axial = mc * r * r / 2.0 + ms * 2.0 * r * r / 5.0;
      const double transverse = mc * (len * len / 12.0 + r * r / 4.0) +
                                ms * (2.0 * r * r / 5.0 + len * len / 4.0 + 3.0 * len * r / 8.0);
      if (len < 1e-12) return Mat3::Identity() * axial;
      const Vec3 a = (p1 - p0) / len;
      return transverse * Mat3::Identity() + (axial - transverse) * a * a.transpose();
    }
  }
  return Mat3::Zero();
}

std::vector<std::pair<Vec3, double>> Geometry::contact_points() const {
  switch (type) {
    case GeomType::Sphere: return {{p0, radius}};
    case GeomType::Capsule: return {{p0, radius}, {p1, radius}};
    case GeomType::Box: {
      std::vector<std::pair<Vec3, double>> pts;
      for (int i = 0; i < 8; ++i) {
        const Vec3 s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
        pts.emplace_back(p0 + s.cwiseProduct(half_extents), 0.0);
      }
      return pts;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// CharacterSpec

int CharacterSpec::num_joints() const {
  int n = 0;
  for (const auto& j : joints)
    if (j.mode != JointMode::Fixed) ++n;
  return n;
}

int CharacterSpec::joint_count(Region region) const {
  int n = 0;
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].mode != JointMode::Fixed && links[i].region == region) ++n;
  return n;
}

int CharacterSpec::find_link(const std::string& n) const {
  for (int i = 0; i < num_links(); ++i)
    if (links[i].name == n) return i;
  return -1;
}

int CharacterSpec::link_index(const std::string& n) const {
  const int i = find_link(n);
  if (i < 0) throw CharacterError("unknown link '" + n + "'");
  return i;
}

int CharacterSpec::find_joint(const std::string& n) const {
  for (int i = 0; i < static_cast<int>(joints.size()); ++i)
    if (joints[i].name == n) return i;
  return -1;
}

std::vector<double> CharacterSpec::default_angles() const {
  std::vector<double> q(num_dofs_, 0.0);
  for (const auto& j : joints)
    for (int d = 0; d < j.dof(); ++d) q[j.dof_offset + d] = j.default_pose[d];
  return q;
}

void CharacterSpec::finalize() {
  num_dofs_ = 0;
  active_dofs_.clear();
  dof_joint_.clear();
  for (int i = 0; i < static_cast<int>(joints.size()); ++i) {
    JointSpec& j = joints[i];
    j.dof_offset = j.dof() > 0 ? num_dofs_ : -1;
    for (int d = 0; d < j.dof(); ++d) {
      if (j.mode == JointMode::Active) active_dofs_.push_back(num_dofs_);
      dof_joint_.push_back(i);
      ++num_dofs_;
    }
  }
}

// ---------------------------------------------------------------------------
// Loading

namespace {

std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.is_null() ? std::string() : " (line " + std::to_string(m.line + 1) + ")";
}

Vec3 read_vec3(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() != 3) throw CharacterError(what + " must be a 3-vector" + where(n));
  return Vec3(n[0].as<double>(), n[1].as<double>(), n[2].as<double>());
}

Vec3 read_axis(const YAML::Node& n) {
  if (n.IsSequence()) return read_vec3(n, "axis").normalized();
  std::string s = n.as<std::string>();
  double sign = 1.0;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    sign = s[0] == '-' ? -1.0 : 1.0;
    s = s.substr(1);
  }
  if (s.size() != 1) throw CharacterError("bad axis '" + n.as<std::string>() + "'" + where(n));
  try {
    return sign * axis_from_char(s[0]);
  } catch (const std::invalid_argument&) {
    throw CharacterError("bad axis '" + n.as<std::string>() + "'" + where(n));
  }
}

std::vector<Vec3> read_axes(const YAML::Node& n) {
  std::vector<Vec3> out;
  if (!n) return out;
  if (!n.IsSequence()) throw CharacterError("axes must be a list" + where(n));
  for (const auto& a : n) out.push_back(read_axis(a));
  return out;
}

Region read_region(const YAML::Node& n) {
  const std::string s = n ? n.as<std::string>() : "upper";
  if (s == "upper") return Region::Upper;
  if (s == "lower") return Region::Lower;
  if (s == "tail") return Region::Tail;
  if (s == "ear") return Region::Ear;
  throw CharacterError("unknown region '" + s + "'" + where(n));
}

JointMode read_mode(const YAML::Node& n, bool is_root) {
  if (!n) return is_root ? JointMode::Free : JointMode::Active;
  const std::string s = n.as<std::string>();
  if (s == "free") return JointMode::Free;
  if (s == "active") return JointMode::Active;
  if (s == "passive") return JointMode::Passive;
  if (s == "fixed") return JointMode::Fixed;
  throw CharacterError("unknown joint mode '" + s + "'" + where(n));
}

Geometry read_geometry(const YAML::Node& n) {
  Geometry g;
  const std::string type = n["type"].as<std::string>("");
  if (type == "capsule") {
    g.type = GeomType::Capsule;
    g.p0 = read_vec3(n["from"], "capsule from");
    g.p1 = read_vec3(n["to"], "capsule to");
    g.radius = n["radius"].as<double>();
  } else if (type == "sphere") {
    g.type = GeomType::Sphere;
    g.p0 = n["center"] ? read_vec3(n["center"], "sphere center") : Vec3::Zero();
    g.radius = n["radius"].as<double>();
  } else if (type == "box") {
    g.type = GeomType::Box;
    g.p0 = n["center"] ? read_vec3(n["center"], "box center") : Vec3::Zero();
    g.half_extents = read_vec3(n["half_extents"], "box half_extents");
  } else {
    throw CharacterError("unknown geometry type '" + type + "'" + where(n));
  }
  if (g.volume() <= 0.0) throw CharacterError("geometry has zero volume" + where(n));
  return g;
}

std::vector<double> read_list(const YAML::Node& n, int count, double fill, const std::string& what) {
  if (!n) return std::vector<double>(count, fill);
  std::vector<double> v;
  if (n.IsScalar()) {
    v.assign(count, n.as<double>());
  } else {
    for (const auto& x : n) v.push_back(x.as<double>());
  }
  if (static_cast<int>(v.size()) != count)
    throw CharacterError(what + " needs " + std::to_string(count) + " values" + where(n));
  return v;
}

void read_term(const YAML::Node& reward, const char* key, RewardTerm& term) {
  const YAML::Node n = reward[key];
  if (!n) return;
  term.w = n[0].as<double>();
  term.k = n[1].as<double>();
}

/// Mass properties from geometry when not given explicitly.
void complete_mass_properties(LinkSpec& link, const YAML::Node& node) {
  double total_volume = 0.0;
  Vec3 centroid = Vec3::Zero();
  for (const auto& g : link.geometry) {
    total_volume += g.volume();
    centroid += g.volume() * g.centroid();
  }
  if (node["com"]) {
    link.com = read_vec3(node["com"], "com");
  } else if (total_volume > 0.0) {
    link.com = centroid / total_volume;
  }
  if (node["inertia"]) {
    const YAML::Node in = node["inertia"];
    const auto v = read_list(in, static_cast<int>(in.size()), 0.0, "inertia");
    link.inertia.setZero();
    if (v.size() == 3) {
      link.inertia.diagonal() << v[0], v[1], v[2];
    } else if (v.size() == 6) {
      link.inertia << v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2];
    } else {
      throw CharacterError("inertia needs 3 or 6 values" + where(in));
    }
    return;
  }
  if (total_volume <= 0.0) throw CharacterError("link " + link.name + " needs geometry or an inertia tensor");
  link.inertia.setZero();
  for (const auto& g : link.geometry) {
    const double m = link.mass * g.volume() / total_volume;
    const Vec3 d = g.centroid() - link.com;
    link.inertia += g.inertia(m) + m * (d.squaredNorm() * Mat3::Identity() - d * d.transpose());
  }
}

}  // namespace

CharacterSpec parse_character(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw CharacterError(std::string("character file: ") + e.what());
  }

  try {
    CharacterSpec spec;
    spec.source_text = yaml_text;
    spec.format_version = root["format_version"].as<int>(0);
    if (spec.format_version != 1)
      throw CharacterError("unsupported format_version " + std::to_string(spec.format_version));
    spec.name = root["name"].as<std::string>();
    spec.total_height = root["total_height"].as<double>();
    spec.total_mass = root["total_mass"].as<double>();
    spec.max_torque = root["max_torque"].as<double>();

    if (const YAML::Node p = root["physics"]) {
      PhysicsParams& ph = spec.physics;
      ph.contact_stiffness = p["contact_stiffness"].as<double>(ph.contact_stiffness);
      ph.contact_damping = p["contact_damping"].as<double>(ph.contact_damping);
      ph.friction = p["friction"].as<double>(ph.friction);
      ph.joint_damping = p["joint_damping"].as<double>(ph.joint_damping);
      ph.limit_stiffness = p["limit_stiffness"].as<double>(ph.limit_stiffness);
      ph.limit_damping = p["limit_damping"].as<double>(ph.limit_damping);
      ph.armature = p["armature"].as<double>(ph.armature);
      ph.actuator_speed = p["actuator_speed"].as<double>(ph.actuator_speed);
      ph.max_joint_velocity = p["max_joint_velocity"].as<double>(ph.max_joint_velocity);
      ph.fixed_base = p["fixed_base"].as<bool>(ph.fixed_base);
      ph.gravity = p["gravity"].as<double>(ph.gravity);
    }

    if (const YAML::Node r = root["reward"]) {
      RewardParams& rp = spec.reward;
      read_term(r, "q", rp.q);
      read_term(r, "qdot", rp.qdot);
      read_term(r, "x", rp.x);
      read_term(r, "xdot", rp.xdot);
      read_term(r, "contact", rp.contact);
      read_term(r, "orientation", rp.orientation);
      read_term(r, "action_diff", rp.action_diff);
      read_term(r, "action_min", rp.action_min);
      rp.fail_reward = r["fail_reward"].as<double>(rp.fail_reward);
      rp.contact_force_threshold = r["contact_force_threshold"].as<double>(rp.contact_force_threshold);
      rp.contact_per_foot = r["contact_per_foot"].as<bool>(rp.contact_per_foot);
      rp.root_deviation = r["root_deviation"].as<double>(rp.root_deviation);
      rp.reset_steps = r["reset_steps"].as<int>(rp.reset_steps);
    }

    if (const YAML::Node r = root["retarget"]) {
      if (r["root_height_scale"] && r["root_height_scale"].as<std::string>() != "auto")
        spec.retarget.root_height_scale = r["root_height_scale"].as<double>();
      spec.retarget.scale_horizontal = r["scale_horizontal"].as<bool>(true);
    }

    // Links in file order, then sorted parents-first.
    const YAML::Node links = root["links"];
    if (!links || !links.IsSequence() || links.size() == 0) throw CharacterError("character has no links");
    struct Pending {
      LinkSpec link;
      JointSpec joint;
      std::string parent;
      std::optional<double> weight;
      YAML::Node node;
    };
    std::vector<Pending> pending;
    std::map<std::string, int> by_name;
    for (std::size_t li = 0; li < links.size(); ++li) {
      const YAML::Node ln = links[li];
      Pending p;
      p.node = ln;
      p.link.name = ln["name"].as<std::string>();
      if (by_name.count(p.link.name)) throw CharacterError("duplicate link '" + p.link.name + "'" + where(ln));
      by_name[p.link.name] = static_cast<int>(pending.size());
      p.parent = ln["parent"].as<std::string>("");
      p.link.mass = ln["mass"].as<double>();
      p.link.region = read_region(ln["region"]);
      p.link.position_weight = ln["position_weight"].as<double>(0.0);
      for (const auto& g : ln["geometry"]) p.link.geometry.push_back(read_geometry(g));
      complete_mass_properties(p.link, ln);

      const YAML::Node jn = ln["joint"];
      JointSpec& j = p.joint;
      j.name = jn && jn["name"] ? jn["name"].as<std::string>() : p.link.name;
      j.mode = read_mode(jn ? jn["mode"] : YAML::Node(), p.parent.empty());
      if (jn && jn["position"]) j.frame.translation = read_vec3(jn["position"], "joint position");
      if (jn && jn["rotation"]) {
        const YAML::Node rn = jn["rotation"];
        j.frame.rotation = Quat(rn[0].as<double>(), rn[1].as<double>(), rn[2].as<double>(), rn[3].as<double>()).normalized();
      }
      j.axes = read_axes(jn ? jn["axes"] : YAML::Node());
      const int n = static_cast<int>(j.axes.size());
      if (jn) {
        j.torque_scale = jn["torque_scale"].as<double>(1.0);
        j.kp = jn["kp"].as<double>(0.0);
        j.kd = jn["kd"].as<double>(0.0);
        j.default_pose = read_list(jn["default"], n, 0.0, "joint " + j.name + " default");
        j.lower = read_list(jn["lower"], n, -kPi / 2.0, "joint " + j.name + " lower");
        j.upper = read_list(jn["upper"], n, kPi / 2.0, "joint " + j.name + " upper");
        if (jn["weight"]) p.weight = jn["weight"].as<double>();
      } else {
        j.default_pose.assign(n, 0.0);
        j.lower.assign(n, -kPi / 2.0);
        j.upper.assign(n, kPi / 2.0);
      }
      pending.push_back(std::move(p));
    }

    // Topological order with cycle detection.
    const int count = static_cast<int>(pending.size());
    std::vector<int> parent_of(count, -1);
    int roots = 0;
    for (int i = 0; i < count; ++i) {
      if (pending[i].parent.empty()) {
        ++roots;
        continue;
      }
      auto it = by_name.find(pending[i].parent);
      if (it == by_name.end())
        throw CharacterError("link '" + pending[i].link.name + "' has unknown parent '" + pending[i].parent + "'");
      parent_of[i] = it->second;
    }
    if (roots != 1) throw CharacterError("link graph must have exactly one root, found " + std::to_string(roots));
    std::vector<int> order;
    std::vector<int> state(count, 0);  // 0 new, 1 visiting, 2 done
    auto visit = [&](auto&& self, int i) -> void {
      if (state[i] == 2) return;
      if (state[i] == 1) throw CharacterError("cyclic link graph at '" + pending[i].link.name + "'");
      state[i] = 1;
      if (parent_of[i] >= 0) self(self, parent_of[i]);
      state[i] = 2;
      order.push_back(i);
    };
    for (int i = 0; i < count; ++i) visit(visit, i);
    std::vector<int> new_index(count);
    for (int k = 0; k < count; ++k) new_index[order[k]] = k;

    for (int k = 0; k < count; ++k) {
      Pending& p = pending[order[k]];
      p.link.parent = parent_of[order[k]] >= 0 ? new_index[parent_of[order[k]]] : -1;
      p.joint.parent_link = p.link.parent;
      p.joint.child_link = k;
      spec.links.push_back(p.link);
      spec.joints.push_back(p.joint);
    }
    spec.finalize();

    // Retarget entries and imitation weights.
    for (int k = 0; k < count; ++k) {
      const Pending& p = pending[order[k]];
      const JointSpec& j = spec.joints[k];
      if (j.mode == JointMode::Fixed || j.mode == JointMode::Free) continue;
      RetargetEntry e;
      e.joint = k;
      const YAML::Node jn = p.node["joint"];
      if (jn && jn["source"]) {
        e.map.source = jn["source"].as<std::string>();
        e.map.axes = jn["source_axes"] ? read_axes(jn["source_axes"]) : j.axes;
        if (e.map.axes.size() != j.axes.size())
          throw CharacterError("joint " + j.name + " source_axes must match its DOF count");
      }
      const bool imitated = spec.links[k].region == Region::Upper || spec.links[k].region == Region::Lower;
      e.weight = p.weight.value_or(imitated ? 1.0 : 0.0);
      spec.retarget.entries.push_back(e);
    }

    spec.root_link = spec.link_index(root["root_link"].as<std::string>(spec.links[0].name));
    spec.head_link = spec.link_index(root["head_link"].as<std::string>());
    for (const auto& f : root["feet_links"]) spec.feet_links.push_back(spec.link_index(f.as<std::string>()));
    if (root["observed_links"]) {
      for (const auto& f : root["observed_links"]) spec.observed_links.push_back(spec.link_index(f.as<std::string>()));
    } else {
      spec.observed_links.push_back(spec.root_link);
      spec.observed_links.push_back(spec.head_link);
      for (int f : spec.feet_links) spec.observed_links.push_back(f);
    }

    validate(spec);
    return spec;
  } catch (const YAML::Exception& e) {
    throw CharacterError(std::string("character file: ") + e.what());
  }
}

CharacterSpec load_character(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CharacterError("cannot open character file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_character(ss.str());
}

void validate(const CharacterSpec& spec) {
  const int n = spec.num_links();
  if (n == 0) throw CharacterError("character has no links");
  if (static_cast<int>(spec.joints.size()) != n) throw CharacterError("one joint per link required");
  if (spec.links[spec.root_link].parent != -1) throw CharacterError("root link has a parent");
  if (spec.root_link != 0) throw CharacterError("root link must come first");
  if (spec.joints[0].mode != JointMode::Free) throw CharacterError("root joint must be free");

  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    const LinkSpec& l = spec.links[i];
    if (i > 0 && (l.parent < 0 || l.parent >= i)) throw CharacterError("link '" + l.name + "' breaks the tree order");
    if (!(l.mass > 0.0)) throw CharacterError("link '" + l.name + "' needs positive mass");
    if ((l.inertia - l.inertia.transpose()).norm() > 1e-9 * (1.0 + l.inertia.norm()))
      throw CharacterError("link '" + l.name + "' inertia is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> eig(l.inertia);
    if (eig.eigenvalues().minCoeff() <= 0.0)
      throw CharacterError("link '" + l.name + "' inertia is not positive definite");
    mass += l.mass;
  }
  if (std::abs(mass - spec.total_mass) > 1e-6 * spec.total_mass) {
    std::ostringstream msg;
    msg << "mass mismatch: links sum to " << mass << " kg, total_mass is " << spec.total_mass << " kg";
    throw CharacterError(msg.str());
  }
  if (spec.feet_links.empty()) throw CharacterError("missing feet links");
  if (spec.head_link < 0) throw CharacterError("missing head link");
  if (!(spec.max_torque > 0.0)) throw CharacterError("max_torque must be positive");

  for (int i = 1; i < n; ++i) {
    const JointSpec& j = spec.joints[i];
    if (j.mode == JointMode::Free) throw CharacterError("joint " + j.name + ": only the root may be free");
    if (j.mode == JointMode::Fixed) continue;
    const int d = static_cast<int>(j.axes.size());
    if (d < 1 || d > 3) throw CharacterError("joint " + j.name + " needs 1 to 3 axes");
    for (int a = 0; a < d; ++a) {
      if (std::abs(j.axes[a].norm() - 1.0) > 1e-9) throw CharacterError("joint " + j.name + " axis not unit");
      for (int b = a + 1; b < d; ++b)
        if (std::abs(j.axes[a].dot(j.axes[b])) > 1e-9) throw CharacterError("joint " + j.name + " axes not orthogonal");
    }
    for (int a = 0; a < d; ++a) {
      if (j.lower[a] > j.upper[a]) throw CharacterError("joint " + j.name + " has lower > upper");
      if (j.default_pose[a] < j.lower[a] || j.default_pose[a] > j.upper[a])
        throw CharacterError("joint " + j.name + " default outside limits");
    }
    if (j.mode == JointMode::Active && !(j.torque_scale > 0.0 && j.torque_scale <= 1.0))
      throw CharacterError("joint " + j.name + " torque_scale must be in (0, 1]");
    if (j.mode == JointMode::Passive && (j.kp < 0.0 || j.kd < 0.0))
      throw CharacterError("joint " + j.name + " needs non-negative kp and kd");
  }

  std::vector<int> seen(n, 0);
  for (const auto& e : spec.retarget.entries) {
    if (e.joint <= 0 || e.joint >= n) throw CharacterError("retarget entry names an unknown joint");
    ++seen[e.joint];
  }
  for (int i = 1; i < n; ++i) {
    const bool movable = spec.joints[i].mode == JointMode::Active || spec.joints[i].mode == JointMode::Passive;
    if (movable && seen[i] != 1)
      throw CharacterError("joint " + spec.joints[i].name + " must appear exactly once in the retarget map");
  }
}

std::vector<std::pair<double, double>> torque_bounds(const CharacterSpec& spec) {
  std::vector<std::pair<double, double>> out;
  for (int dof : spec.active_dofs()) {
    const double m = spec.max_torque * spec.joints[spec.dof_joint()[dof]].torque_scale;
    out.emplace_back(-m, m);
  }
  return out;
}

CharacterSpec merge_fixed_joints(const CharacterSpec& spec) {
  const int n = spec.num_links();
  // Target link for each link and the pose of the link frame inside it.
  std::vector<int> target(n);
  std::vector<Pose> in_target(n);
  for (int i = 0; i < n; ++i) {
    if (i > 0 && spec.joints[i].mode == JointMode::Fixed) {
      const int p = spec.links[i].parent;
      target[i] = target[p];
      in_target[i] = in_target[p] * spec.joints[i].frame;
    } else {
      target[i] = i;
      in_target[i] = Pose{};
    }
  }

  CharacterSpec out = spec;
  out.links.clear();
  out.joints.clear();
  std::vector<int> new_index(n, -1);
  for (int i = 0; i < n; ++i) {
    if (target[i] != i) continue;
    new_index[i] = static_cast<int>(out.links.size());
    out.links.push_back(spec.links[i]);
    out.joints.push_back(spec.joints[i]);
  }
  auto remap = [&](int i) { return i < 0 ? -1 : new_index[target[i]]; };
  for (int i = 0; i < n; ++i) {
    if (target[i] == i) continue;
    LinkSpec& dst = out.links[new_index[target[i]]];
    const LinkSpec& src = spec.links[i];
    const Pose& T = in_target[i];
    const Mat3 R = T.rotation.toRotationMatrix();
    const Vec3 src_com = T.apply(src.com);
    const double m = dst.mass + src.mass;
    const Vec3 com = (dst.mass * dst.com + src.mass * src_com) / m;
    auto shift = [](const Mat3& I, double mass, const Vec3& d) {
      return I + mass * (d.squaredNorm() * Mat3::Identity() - d * d.transpose());
    };
    dst.inertia = shift(dst.inertia, dst.mass, dst.com - com) + shift(R * src.inertia * R.transpose(), src.mass, src_com - com);
    dst.com = com;
    dst.mass = m;
    for (Geometry g : src.geometry) {
      g.p0 = T.apply(g.p0);
      g.p1 = T.apply(g.p1);
      if (g.type == GeomType::Box && !T.rotation.isApprox(Quat::Identity()))
        throw CharacterError("cannot weld a rotated box");
      dst.geometry.push_back(g);
    }
    dst.position_weight = std::max(dst.position_weight, src.position_weight);
  }
  for (int k = 0; k < static_cast<int>(out.links.size()); ++k) {
    out.links[k].parent = remap(out.links[k].parent);
    out.joints[k].parent_link = out.links[k].parent;
    out.joints[k].child_link = k;
  }
  out.root_link = remap(spec.root_link);
  out.head_link = remap(spec.head_link);
  for (int& f : out.feet_links) f = remap(f);
  for (int& o : out.observed_links) o = remap(o);
  out.retarget.entries.clear();
  for (const auto& e : spec.retarget.entries) {
    RetargetEntry r = e;
    r.joint = new_index[e.joint];
    out.retarget.entries.push_back(r);
  }
  out.finalize();
  return out;
}

CharacterSpec with_tail_mode(const CharacterSpec& spec, TailMode mode) {
  CharacterSpec out = spec;
  for (int i = 1; i < out.num_links(); ++i) {
    if (out.links[i].region != Region::Tail) continue;
    JointSpec& j = out.joints[i];
    if (j.axes.empty()) continue;
    const bool was_movable = j.mode != JointMode::Fixed;
    switch (mode) {
      case TailMode::Active: j.mode = JointMode::Active; break;
      case TailMode::Passive: j.mode = JointMode::Passive; break;
      case TailMode::Fixed: j.mode = JointMode::Fixed; break;
    }
    const bool movable = j.mode != JointMode::Fixed;
    auto& entries = out.retarget.entries;
    if (was_movable && !movable) {
      entries.erase(std::remove_if(entries.begin(), entries.end(), [&](const RetargetEntry& e) { return e.joint == i; }),
                    entries.end());
    } else if (!was_movable && movable) {
      RetargetEntry e;
      e.joint = i;
      e.weight = 0.0;
      entries.push_back(e);
      std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.joint < b.joint; });
    }
  }
  out.finalize();
  validate(out);
  return out;
}

}  // namespace retarget
