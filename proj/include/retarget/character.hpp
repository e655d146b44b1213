#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "retarget/math.hpp"

namespace retarget {

enum class Region { Upper, Lower, Tail, Ear };
enum class JointMode { Free, Active, Passive, Fixed };
enum class GeomType { Capsule, Sphere, Box };

const char* to_string(Region r);
const char* to_string(JointMode m);

/// Collision/inertia primitive in the link frame. Capsules run from p0 to p1;
/// spheres sit at p0; boxes are axis-aligned with centre p0.
struct Geometry {
  GeomType type = GeomType::Sphere;
  Vec3 p0 = Vec3::Zero();
  Vec3 p1 = Vec3::Zero();
  double radius = 0.0;
  Vec3 half_extents = Vec3::Zero();

  double volume() const;
  Vec3 centroid() const;
  /// Inertia of the solid primitive with mass m about its own centroid.
  Mat3 inertia(double mass) const;
  /// Points tested against the ground plane, with their contact radius.
  std::vector<std::pair<Vec3, double>> contact_points() const;
};

struct LinkSpec {
  std::string name;
  int parent = -1;  ///< parent link index; joints[i] connects links[i] to it
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  ///< about the COM, link frame
  Region region = Region::Upper;
  std::vector<Geometry> geometry;
  double position_weight = 0.0;  ///< w for the link-position imitation terms
};

struct JointRetarget {
  std::string source;          ///< canonical human joint; empty = unmatched
  std::vector<Vec3> axes;      ///< signed human axes, one per DOF
};

struct JointSpec {
  std::string name;
  int parent_link = -1;
  int child_link = -1;
  /// Joint frame relative to the parent link frame; the child link frame
  /// coincides with it at zero angles.
  Pose frame;
  std::vector<Vec3> axes;  ///< rotation axes in the joint frame, applied in order
  JointMode mode = JointMode::Active;
  double torque_scale = 1.0;
  std::vector<double> lower, upper, default_pose;
  double kp = 0.0, kd = 0.0;
  int dof_offset = -1;  ///< first index into the joint-angle vector

  int dof() const { return (mode == JointMode::Fixed || mode == JointMode::Free) ? 0 : static_cast<int>(axes.size()); }
};

struct RetargetEntry {
  int joint = -1;  ///< character joint index
  JointRetarget map;
  double weight = 1.0;  ///< imitation weight w_i for this joint's DOFs
};

struct RetargetMap {
  std::vector<RetargetEntry> entries;  ///< one per non-fixed, non-root joint
  std::optional<double> root_height_scale;  ///< default: character / subject height
  bool scale_horizontal = true;

  double root_scale(double character_height, double subject_height) const {
    return root_height_scale.value_or(character_height / subject_height);
  }
};

struct RewardTerm {
  double w = 0.0;
  double k = 0.0;
};

struct RewardParams {
  RewardTerm q, qdot, x, xdot, contact, orientation, action_diff, action_min;
  double fail_reward = -5.0;
  double contact_force_threshold = 1.0;  ///< N
  bool contact_per_foot = true;          ///< count mismatched feet, else a single flag
  double root_deviation = 0.30;          ///< m
  int reset_steps = 500;
};

struct PhysicsParams {
  double contact_stiffness = 2.0e4;  ///< N/m per contact point
  double contact_damping = 500.0;    ///< N s/m per contact point
  double friction = 0.9;
  double joint_damping = 0.5;        ///< N m s/rad on every DOF
  double limit_stiffness = 400.0;    ///< N m/rad beyond a limit
  double limit_damping = 4.0;
  double armature = 0.0;             ///< kg m^2 added to every joint DOF
  /// No-load speed of the actuators (rad/s): active DOFs get damping
  /// max_torque * torque_scale / actuator_speed. 0 disables it.
  double actuator_speed = 0.0;
  double max_joint_velocity = 100.0;  ///< rad/s, joint rates are clipped to this
  bool fixed_base = false;
  double gravity = 9.81;
};

class CharacterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CharacterSpec {
  int format_version = 1;
  std::string name;
  double total_height = 0.0;
  double total_mass = 0.0;
  double max_torque = 0.0;
  int root_link = 0;
  int head_link = -1;
  std::vector<int> feet_links;
  std::vector<int> observed_links;
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;  ///< joints[i] is the parent joint of links[i]
  RetargetMap retarget;
  RewardParams reward;
  PhysicsParams physics;
  std::string source_text;  ///< file contents this spec was parsed from

  int num_links() const { return static_cast<int>(links.size()); }
  int num_joints() const;  ///< movable joints plus the root; welds excluded
  int num_dofs() const { return num_dofs_; }
  int num_active_dofs() const { return static_cast<int>(active_dofs_.size()); }
  /// Joint-angle index of each action entry.
  const std::vector<int>& active_dofs() const { return active_dofs_; }
  /// Joint owning each joint-angle index.
  const std::vector<int>& dof_joint() const { return dof_joint_; }
  int joint_count(Region region) const;
  int find_link(const std::string& name) const;
  int link_index(const std::string& name) const;
  int find_joint(const std::string& name) const;
  std::vector<double> default_angles() const;

  /// Recomputes DOF offsets and active-DOF tables after edits.
  void finalize();

 private:
  int num_dofs_ = 0;
  std::vector<int> active_dofs_;
  std::vector<int> dof_joint_;
};

CharacterSpec parse_character(const std::string& yaml_text);
CharacterSpec load_character(const std::string& path);
/// Checks tree structure, masses, feet and joint invariants.
void validate(const CharacterSpec& spec);

/// (min, max) torque of every action entry.
std::vector<std::pair<double, double>> torque_bounds(const CharacterSpec& spec);

/// Spec with every fixed joint removed and its child link welded into the
/// parent (mass, inertia and geometry combined).
CharacterSpec merge_fixed_joints(const CharacterSpec& spec);

enum class TailMode { Active, Passive, Fixed };
/// Switches every tail-region joint to the given mode. Joints made active keep
/// their configured torque scale.
CharacterSpec with_tail_mode(const CharacterSpec& spec, TailMode mode);

}  // namespace retarget
