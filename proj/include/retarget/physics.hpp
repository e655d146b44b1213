#pragma once

#include <stdexcept>
#include <vector>

#include "retarget/character.hpp"
#include "retarget/kinematics.hpp"

namespace retarget {

class SimulationDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimState {
  VecX q;   ///< see kinematics.hpp for the layout
  VecX qd;
  std::vector<Pose> link_poses;
  std::vector<double> foot_forces;  ///< normal force per feet_links entry, averaged over the last step (N)
  std::vector<char> link_touching;  ///< link geometry intersects the ground
  double time = 0.0;

  /// Tangential anchor per contact point (friction spring); NaN x = free.
  std::vector<Vec3> anchors;
};

struct Contact {
  int link = -1;
  Vec3 point = Vec3::Zero();
  double normal_force = 0.0;
  Vec3 tangential_force = Vec3::Zero();
};

struct ContactReport {
  std::vector<Contact> contacts;    ///< state at the end of the step
  std::vector<double> foot_forces;  ///< as in SimState
};

/// Reduced-coordinate articulated body simulator for one character. Holds
/// only immutable model data, so one instance can step many states.
class Simulator {
 public:
  explicit Simulator(const CharacterSpec& spec);

  const CharacterSpec& spec() const { return spec_; }
  int position_dim() const { return kRootPosDim + spec_.num_dofs(); }
  int velocity_dim() const { return kRootVelDim + spec_.num_dofs(); }

  /// Default joint angles, identity root with the lowest point on the ground.
  SimState initial_state() const;

  /// Per-DOF torques. Active entries are the scaled, clamped action; passive
  /// entries report the PD torque (step applies it implicitly).
  VecX apply_action(const SimState& state, const VecX& action) const;

  /// Advances by dt using `substeps` integration substeps. `torques` holds one
  /// value per DOF; passive and fixed entries are ignored.
  ContactReport step(SimState& state, const VecX& torques, double dt, int substeps) const;

  /// Overwrites coordinates and lifts the root out of the ground.
  void set_pose(SimState& state, const KinematicPose& pose, bool with_velocities = true) const;
  void set_coordinates(SimState& state, const VecX& q, const VecX& qd) const;

  std::vector<Pose> forward_kinematics(const VecX& q) const;
  double kinetic_energy(const SimState& state) const;
  double potential_energy(const SimState& state) const;
  /// Spatial momentum about the world origin: (angular, linear).
  Vec6 momentum(const SimState& state) const;
  Vec3 center_of_mass(const SimState& state) const;
  double total_mass() const { return total_mass_; }
  MatX mass_matrix(const VecX& q) const;

 private:
  struct Point {
    int link;
    Vec3 local;
    double radius;
  };
  struct Frames;
  struct ForceModel;

  void kinematics(const VecX& q, Frames& f) const;
  void velocities(const VecX& nu, Frames& f) const;
  void composite_inertia(Frames& f) const;
  void assemble_mass(Frames& f) const;
  VecX bias(const Frames& f, const VecX& torques) const;
  void force_model(const SimState& state, const Frames& f, double h, ForceModel& out, int pass) const;
  void refresh(SimState& state) const;
  VecX to_internal(const VecX& q, const VecX& qd) const;
  VecX to_external(const VecX& q, const VecX& nu) const;

  CharacterSpec spec_;
  std::vector<Point> points_;
  double total_mass_ = 0.0;
  Vec3 root_com_ = Vec3::Zero();
  int nv_ = 0;    ///< internal velocity dimension
  int base_ = 0;  ///< 6 for a floating root, 0 for a fixed base
};

}  // namespace retarget
