#include "retarget/physics.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace retarget {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMaxSpeed = 1.0e4;

Vec6 motion_cross(const Vec6& v, const Vec6& s) {
  Vec6 out;
  const Vec3 w = v.head<3>();
  out.head<3>() = w.cross(s.head<3>());
  out.tail<3>() = w.cross(s.tail<3>()) + v.tail<3>().cross(s.head<3>());
  return out;
}

Mat6 spatial_inertia(double m, const Vec3& c, const Mat3& ic) {
  const Mat3 cx = skew(c);
  Mat6 out;
  out.topLeftCorner<3, 3>() = ic - m * cx * cx;
  out.topRightCorner<3, 3>() = m * cx;
  out.bottomLeftCorner<3, 3>() = -m * cx;
  out.bottomRightCorner<3, 3>() = m * Mat3::Identity();
  return out;
}

}  // namespace

struct Simulator::Frames {
  std::vector<Pose> poses;
  std::vector<Mat6> inertia;
  std::vector<Mat6> composite;
  Eigen::Matrix<double, 6, Eigen::Dynamic> S;
  std::vector<Vec6> link_velocity;
  std::vector<Vec6> pre_velocity;  ///< velocity of the frame carrying each column's axis
  std::vector<Vec6> sub_momentum;
  std::vector<Vec6> sub_force;
  MatX M;
};

struct Simulator::ForceModel {
  VecX f0;
  MatX D;
  // per point: 0 inactive, 1 stick, 2 slip
  std::vector<char> mode;
  std::vector<double> delta;
  std::vector<Vec3> x;  ///< world contact point (bottom of the sphere)
  std::vector<MatX> J;  ///< 3 x nv point Jacobian (active points only)
  std::vector<double> slip_damping;  ///< tangential damping standing in for the Coulomb force
};

Simulator::Simulator(const CharacterSpec& spec) : spec_(spec) {
  spec_.finalize();
  base_ = spec_.physics.fixed_base ? 0 : 6;
  nv_ = base_ + spec_.num_dofs();
  for (int i = 0; i < spec_.num_links(); ++i) {
    total_mass_ += spec_.links[i].mass;
    for (const auto& g : spec_.links[i].geometry)
      for (const auto& [p, r] : g.contact_points()) points_.push_back({i, p, r});
  }
  // COM of the root link plus everything welded to it, in the root frame
  VecX q0 = VecX::Zero(kRootPosDim + spec_.num_dofs());
  q0[3] = 1.0;
  const std::vector<Pose> poses = retarget::forward_kinematics(spec_, q0);
  std::vector<char> rigid(spec_.num_links(), 0);
  rigid[0] = 1;
  double m = 0.0;
  for (int i = 0; i < spec_.num_links(); ++i) {
    if (i > 0) rigid[i] = rigid[spec_.links[i].parent] && spec_.joints[i].dof() == 0;
    if (!rigid[i]) continue;
    m += spec_.links[i].mass;
    root_com_ += spec_.links[i].mass * poses[i].apply(spec_.links[i].com);
  }
  if (m > 0.0) root_com_ /= m;
}

std::vector<Pose> Simulator::forward_kinematics(const VecX& q) const { return retarget::forward_kinematics(spec_, q); }

void Simulator::kinematics(const VecX& q, Frames& f) const {
  const int n = spec_.num_links();
  f.poses = retarget::forward_kinematics(spec_, q);
  f.inertia.resize(n);
  for (int i = 0; i < n; ++i) {
    const LinkSpec& l = spec_.links[i];
    const Mat3 r = f.poses[i].rotation.toRotationMatrix();
    f.inertia[i] = spatial_inertia(l.mass, f.poses[i].apply(l.com), r * l.inertia * r.transpose());
  }
  f.S.setZero(6, nv_);
  if (base_ == 6) f.S.leftCols<6>().setIdentity();
  for (int i = 1; i < n; ++i) {
    const JointSpec& j = spec_.joints[i];
    if (j.dof() == 0) continue;
    const Pose frame = f.poses[j.parent_link] * j.frame;
    Quat r = frame.rotation;
    for (int d = 0; d < j.dof(); ++d) {
      const Vec3 axis = r * j.axes[d];
      const int col = base_ + j.dof_offset + d;
      f.S.col(col).head<3>() = axis;
      f.S.col(col).tail<3>() = frame.translation.cross(axis);
      r = r * axis_angle(j.axes[d], q[kRootPosDim + j.dof_offset + d]);
    }
  }
  composite_inertia(f);
  assemble_mass(f);
}

void Simulator::composite_inertia(Frames& f) const {
  const int n = spec_.num_links();
  f.composite = f.inertia;
  for (int i = n - 1; i > 0; --i) f.composite[spec_.links[i].parent] += f.composite[i];
}

void Simulator::assemble_mass(Frames& f) const {
  f.M.setZero(nv_, nv_);
  const int n = spec_.num_links();
  if (base_ == 6) f.M.topLeftCorner<6, 6>() = f.composite[0];
  for (int i = 1; i < n; ++i) {
    const JointSpec& j = spec_.joints[i];
    for (int d = 0; d < j.dof(); ++d) {
      const int col = base_ + j.dof_offset + d;
      const Vec6 F = f.composite[i] * f.S.col(col);
      // same joint
      for (int e = 0; e <= d; ++e) {
        const int other = base_ + j.dof_offset + e;
        f.M(other, col) = f.M(col, other) = f.S.col(other).dot(F);
      }
      // ancestors
      for (int a = j.parent_link; a > 0; a = spec_.links[a].parent) {
        const JointSpec& ja = spec_.joints[a];
        for (int e = 0; e < ja.dof(); ++e) {
          const int other = base_ + ja.dof_offset + e;
          f.M(other, col) = f.M(col, other) = f.S.col(other).dot(F);
        }
      }
      f.M(col, col) += spec_.physics.armature;
      if (base_ == 6) {
        f.M.block<6, 1>(0, col) = F;
        f.M.block<1, 6>(col, 0) = F.transpose();
      }
    }
  }
}

void Simulator::velocities(const VecX& nu, Frames& f) const {
  const int n = spec_.num_links();
  f.link_velocity.assign(n, Vec6::Zero());
  f.pre_velocity.assign(nv_, Vec6::Zero());
  if (base_ == 6) f.link_velocity[0] = nu.head<6>();
  for (int i = 1; i < n; ++i) {
    const JointSpec& j = spec_.joints[i];
    Vec6 v = f.link_velocity[j.parent_link];
    for (int d = 0; d < j.dof(); ++d) {
      const int col = base_ + j.dof_offset + d;
      f.pre_velocity[col] = v;
      v += f.S.col(col) * nu[col];
    }
    f.link_velocity[i] = v;
  }
  f.sub_momentum.resize(n);
  f.sub_force.resize(n);
  const Vec3 g(0.0, -spec_.physics.gravity, 0.0);
  for (int i = 0; i < n; ++i) {
    f.sub_momentum[i] = f.inertia[i] * f.link_velocity[i];
    const double m = spec_.links[i].mass;
    const Vec3 c = f.poses[i].apply(spec_.links[i].com);
    f.sub_force[i].head<3>() = c.cross(m * g);
    f.sub_force[i].tail<3>() = m * g;
  }
  for (int i = n - 1; i > 0; --i) {
    f.sub_momentum[spec_.links[i].parent] += f.sub_momentum[i];
    f.sub_force[spec_.links[i].parent] += f.sub_force[i];
  }
}

VecX Simulator::bias(const Frames& f, const VecX& torques) const {
  VecX Q = VecX::Zero(nv_);
  if (base_ == 6) Q.head<6>() = f.sub_force[0];
  for (int i = 1; i < spec_.num_links(); ++i) {
    const JointSpec& j = spec_.joints[i];
    for (int d = 0; d < j.dof(); ++d) {
      const int dof = j.dof_offset + d;
      const int col = base_ + dof;
      const Vec6 s = f.S.col(col);
      double q = s.dot(f.sub_force[i]) + motion_cross(f.pre_velocity[col], s).dot(f.sub_momentum[i]);
      if (j.mode == JointMode::Active) q += torques[dof];
      Q[col] = q;
    }
  }
  return Q;
}

void Simulator::force_model(const SimState& state, const Frames& f, double h, ForceModel& out, int pass) const {
  const PhysicsParams& ph = spec_.physics;
  out.f0.setZero(nv_);
  out.D.setZero(nv_, nv_);
  const VecX& q = state.q;

  for (int i = 1; i < spec_.num_links(); ++i) {
    const JointSpec& j = spec_.joints[i];
    for (int d = 0; d < j.dof(); ++d) {
      const int dof = j.dof_offset + d;
      const int col = base_ + dof;
      const double theta = q[kRootPosDim + dof];
      double damping = ph.joint_damping;
      if (j.mode == JointMode::Active && ph.actuator_speed > 0.0)
        damping += spec_.max_torque * j.torque_scale / ph.actuator_speed;
      if (j.mode == JointMode::Passive) {
        out.f0[col] += j.kp * (j.default_pose[d] - theta);
        damping += j.kd + h * j.kp;
      }
      if (theta > j.upper[d]) {
        out.f0[col] -= ph.limit_stiffness * (theta - j.upper[d]);
        damping += ph.limit_damping + h * ph.limit_stiffness;
      } else if (theta < j.lower[d]) {
        out.f0[col] -= ph.limit_stiffness * (theta - j.lower[d]);
        damping += ph.limit_damping + h * ph.limit_stiffness;
      }
      out.D(col, col) += damping;
    }
  }

  const int np = static_cast<int>(points_.size());
  if (pass == 0) {
    out.mode.assign(np, 0);
    out.delta.assign(np, 0.0);
    out.x.assign(np, Vec3::Zero());
    out.J.assign(np, MatX());
    out.slip_damping.assign(np, 0.0);
    for (int p = 0; p < np; ++p) {
      const Point& pt = points_[p];
      const Vec3 centre = f.poses[pt.link].apply(pt.local);
      const double delta = pt.radius - centre.y();
      if (delta <= 0.0) continue;
      out.mode[p] = 1;
      out.delta[p] = delta;
      out.x[p] = centre - Vec3(0.0, pt.radius, 0.0);
      MatX& J = out.J[p];
      J.setZero(3, nv_);
      for (int col = 0; col < base_; ++col)
        J.col(col) = f.S.col(col).tail<3>() + f.S.col(col).head<3>().cross(out.x[p]);
      for (int i = pt.link; i > 0; i = spec_.links[i].parent) {
        const JointSpec& j = spec_.joints[i];
        for (int d = 0; d < j.dof(); ++d) {
          const int col = base_ + j.dof_offset + d;
          J.col(col) = f.S.col(col).tail<3>() + f.S.col(col).head<3>().cross(out.x[p]);
        }
      }
    }
  }

  const double kn = ph.contact_stiffness;
  const double cn = ph.contact_damping + h * kn;
  for (int p = 0; p < np; ++p) {
    if (out.mode[p] == 0) continue;
    const MatX& J = out.J[p];
    const auto Jy = J.row(1);
    out.f0.noalias() += Jy.transpose() * (kn * out.delta[p]);
    out.D.noalias() += cn * Jy.transpose() * Jy;
    if (out.mode[p] == 1) {
      const Vec3& a = state.anchors[p];
      const Vec3 d(out.x[p].x() - a.x(), 0.0, out.x[p].z() - a.z());
      for (int r : {0, 2}) {
        const auto Jt = J.row(r);
        out.f0.noalias() -= Jt.transpose() * (kn * d[r]);
        out.D.noalias() += cn * Jt.transpose() * Jt;
      }
    } else {
      for (int r : {0, 2}) out.D.noalias() += out.slip_damping[p] * J.row(r).transpose() * J.row(r);
    }
  }
}

VecX Simulator::to_internal(const VecX& q, const VecX& qd) const {
  VecX nu(nv_);
  if (base_ == 6) {
    const Vec3 w = qd.segment<3>(3);
    nu.head<3>() = w;
    nu.segment<3>(3) = qd.head<3>() - w.cross(q.head<3>());
  }
  nu.tail(spec_.num_dofs()) = qd.tail(spec_.num_dofs());
  return nu;
}

VecX Simulator::to_external(const VecX& q, const VecX& nu) const {
  VecX qd = VecX::Zero(velocity_dim());
  if (base_ == 6) {
    const Vec3 w = nu.head<3>();
    qd.head<3>() = nu.segment<3>(3) + w.cross(q.head<3>());
    qd.segment<3>(3) = w;
  }
  qd.tail(spec_.num_dofs()) = nu.tail(spec_.num_dofs());
  return qd;
}

VecX Simulator::apply_action(const SimState& state, const VecX& action) const {
  if (action.size() != spec_.num_active_dofs())
    throw std::invalid_argument("action has " + std::to_string(action.size()) + " entries, expected " +
                                std::to_string(spec_.num_active_dofs()));
  VecX tau = VecX::Zero(spec_.num_dofs());
  const auto& active = spec_.active_dofs();
  for (int a = 0; a < action.size(); ++a) {
    const int dof = active[a];
    const double scale = spec_.max_torque * spec_.joints[spec_.dof_joint()[dof]].torque_scale;
    tau[dof] = std::clamp(action[a], -1.0, 1.0) * scale;
  }
  for (int i = 1; i < spec_.num_links(); ++i) {
    const JointSpec& j = spec_.joints[i];
    if (j.mode != JointMode::Passive) continue;
    for (int d = 0; d < j.dof(); ++d) {
      const int dof = j.dof_offset + d;
      tau[dof] = j.kp * (j.default_pose[d] - state.q[kRootPosDim + dof]) - j.kd * state.qd[kRootVelDim + dof];
    }
  }
  return tau;
}

ContactReport Simulator::step(SimState& state, const VecX& torques, double dt, int substeps) const {
  if (!(dt > 0.0) || substeps < 1) throw std::invalid_argument("step needs dt > 0 and at least one substep");
  if (torques.size() != spec_.num_dofs()) throw std::invalid_argument("torque vector has the wrong length");
  const double h = dt / substeps;
  const int np = static_cast<int>(points_.size());
  if (static_cast<int>(state.anchors.size()) != np) state.anchors.assign(np, Vec3::Constant(kNaN));

  // Work in internal velocities: qd temporarily holds nu.
  SimState& s = state;
  s.qd = to_internal(s.q, s.qd);

  Frames frames;
  kinematics(s.q, frames);
  ForceModel fm;
  const int nfeet = static_cast<int>(spec_.feet_links.size());
  std::vector<double> foot_sum(nfeet, 0.0);

  auto solve_kick = [&](const Frames& f, const VecX& rhs_base, const VecX& Q, VecX& out_nu,
                        std::vector<Contact>& report) {
    // Anchor any newly penetrating point at its current location.
    for (int p = 0; p < np; ++p) {
      const Point& pt = points_[p];
      const Vec3 c = f.poses[pt.link].apply(pt.local);
      if (pt.radius - c.y() > 0.0) {
        if (std::isnan(s.anchors[p].x())) s.anchors[p] = c - Vec3(0.0, pt.radius, 0.0);
      } else {
        s.anchors[p] = Vec3::Constant(kNaN);
      }
    }
    const double kn = spec_.physics.contact_stiffness;
    const double cn = spec_.physics.contact_damping + h * kn;
    const double mu = spec_.physics.friction;
    for (int pass = 0; pass < 4; ++pass) {
      force_model(s, f, h, fm, pass);
      const MatX A = f.M + 0.5 * h * fm.D;
      const VecX rhs = rhs_base + 0.5 * h * (Q + fm.f0);
      Eigen::LLT<MatX> llt(A);
      out_nu = llt.info() == Eigen::Success ? VecX(llt.solve(rhs)) : VecX(A.ldlt().solve(rhs));
      bool changed = false;
      for (int p = 0; p < np; ++p) {
        if (fm.mode[p] == 0) continue;
        const Vec3 v = fm.J[p] * out_nu;
        const double fn = kn * fm.delta[p] - cn * v.y();
        if (fn <= 0.0) {
          fm.mode[p] = 0;
          changed = true;
          continue;
        }
        if (fm.mode[p] == 1) {
          const Vec3& a = s.anchors[p];
          const Vec3 ft(-kn * (fm.x[p].x() - a.x()) - cn * v.x(), 0.0, -kn * (fm.x[p].z() - a.z()) - cn * v.z());
          if (ft.norm() > mu * fn) {
            fm.mode[p] = 2;
            const double vt = std::hypot(v.x(), v.z());
            fm.slip_damping[p] = std::min(cn, mu * fn / std::max(vt, 1e-3));
            changed = true;
          }
        }
      }
      if (!changed || pass == 3) {
        {
          report.clear();
          for (int p = 0; p < np; ++p) {
            if (fm.mode[p] == 0) continue;
            const Vec3 v = fm.J[p] * out_nu;
            Contact c;
            c.link = points_[p].link;
            c.point = fm.x[p];
            c.normal_force = std::max(0.0, kn * fm.delta[p] - cn * v.y());
            if (fm.mode[p] == 1) {
              const Vec3& a = s.anchors[p];
              c.tangential_force =
                  Vec3(-kn * (fm.x[p].x() - a.x()) - cn * v.x(), 0.0, -kn * (fm.x[p].z() - a.z()) - cn * v.z());
            } else {
              c.tangential_force = -fm.slip_damping[p] * Vec3(v.x(), 0.0, v.z());
            }
            report.push_back(c);
          }
        }
        break;
      }
    }
  };

  auto add_foot_forces = [&](const std::vector<Contact>& contacts, double weight) {
    for (const auto& c : contacts)
      for (int k = 0; k < nfeet; ++k)
        if (spec_.feet_links[k] == c.link) foot_sum[k] += weight * c.normal_force;
  };

  std::vector<Contact> kick_contacts;
  for (int sub = 0; sub < substeps; ++sub) {
    // kick 1
    velocities(s.qd, frames);
    const VecX Q1 = bias(frames, torques);
    VecX nu_half;
    solve_kick(frames, frames.M * s.qd, Q1, nu_half, kick_contacts);
    add_foot_forces(kick_contacts, 0.5 / substeps);
    const VecX p_half = frames.M * nu_half;

    // drift
    VecX q_new = s.q;
    if (base_ == 6) {
      // Root COM moves in a straight line while the rigid root body turns about it.
      const Vec3 w = nu_half.head<3>();
      const Quat r = root_quat(s.q).normalized();
      const Vec3 com = s.q.head<3>() + r * root_com_;
      const Vec3 v_com = nu_half.segment<3>(3) + w.cross(com);
      const Quat r_new = (quat_exp(h * w) * r).normalized();
      q_new.head<3>() = com + h * v_com - r_new * root_com_;
      set_root_quat(q_new, r_new);
    }
    q_new.tail(spec_.num_dofs()) += h * nu_half.tail(spec_.num_dofs());
    s.q = q_new;

    // kick 2
    kinematics(s.q, frames);
    velocities(nu_half, frames);
    const VecX Q2 = bias(frames, torques);
    s.qd = nu_half;
    VecX nu_new;
    solve_kick(frames, p_half, Q2, nu_new, kick_contacts);
    add_foot_forces(kick_contacts, 0.5 / substeps);
    s.qd = nu_new;
    const double vmax = spec_.physics.max_joint_velocity;
    for (int i = base_; i < nv_; ++i) s.qd[i] = std::clamp(s.qd[i], -vmax, vmax);

    // Slide anchors of slipping points to the friction-cone boundary.
    const double mu = spec_.physics.friction;
    for (int p = 0; p < np; ++p) {
      if (fm.mode[p] == 0 || std::isnan(s.anchors[p].x())) continue;
      const Vec3 d(fm.x[p].x() - s.anchors[p].x(), 0.0, fm.x[p].z() - s.anchors[p].z());
      const double limit = mu * fm.delta[p];
      if (d.norm() > limit) s.anchors[p] = Vec3(fm.x[p].x(), 0.0, fm.x[p].z()) - d * (limit / d.norm());
    }

    double speed = spec_.num_dofs() > 0 ? s.qd.tail(spec_.num_dofs()).cwiseAbs().maxCoeff() : 0.0;
    if (base_ == 6) {
      const Vec3 w = s.qd.head<3>();
      speed = std::max({speed, w.norm(), (s.qd.segment<3>(3) + w.cross(s.q.head<3>())).norm()});
    }
    if (!s.q.allFinite() || !s.qd.allFinite() || !(speed <= kMaxSpeed))
      throw SimulationDiverged("simulation diverged at t = " + std::to_string(s.time + (sub + 1) * h));
  }

  s.qd = to_external(s.q, s.qd);
  s.time += dt;
  refresh(s);
  s.foot_forces = foot_sum;
  ContactReport report;
  report.contacts = std::move(kick_contacts);
  report.foot_forces = foot_sum;
  return report;
}

void Simulator::refresh(SimState& state) const {
  state.link_poses = forward_kinematics(state.q);
  state.link_touching.assign(spec_.num_links(), 0);
  for (const auto& pt : points_) {
    const Vec3 c = state.link_poses[pt.link].apply(pt.local);
    if (c.y() - pt.radius < 0.0) state.link_touching[pt.link] = 1;
  }
  if (state.foot_forces.size() != spec_.feet_links.size()) state.foot_forces.assign(spec_.feet_links.size(), 0.0);
}

void Simulator::set_coordinates(SimState& state, const VecX& q, const VecX& qd) const {
  if (q.size() != position_dim() || qd.size() != velocity_dim())
    throw std::invalid_argument("coordinate vectors have the wrong length");
  state.q = q;
  set_root_quat(state.q, root_quat(q).normalized());
  state.qd = qd;
  if (base_ == 0) state.qd.head<6>().setZero();
  state.anchors.assign(points_.size(), Vec3::Constant(kNaN));
  state.foot_forces.assign(spec_.feet_links.size(), 0.0);
  refresh(state);
}

void Simulator::set_pose(SimState& state, const KinematicPose& pose, bool with_velocities) const {
  VecX q = pose.q();
  VecX qd = with_velocities ? pose.qd() : VecX::Zero(velocity_dim());
  if (base_ == 6) {
    const auto poses = forward_kinematics(q);
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& pt : points_) lowest = std::min(lowest, poses[pt.link].apply(pt.local).y() - pt.radius);
    if (lowest < 0.0) q[1] -= lowest;
  }
  set_coordinates(state, q, qd);
}

SimState Simulator::initial_state() const {
  KinematicPose pose;
  pose.joint_angles = Eigen::Map<const VecX>(spec_.default_angles().data(), spec_.num_dofs());
  pose.joint_velocities = VecX::Zero(spec_.num_dofs());
  SimState state;
  if (base_ == 6) {
    const auto poses = forward_kinematics(pose.q());
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& pt : points_) lowest = std::min(lowest, poses[pt.link].apply(pt.local).y() - pt.radius);
    pose.root_position.y() = -lowest;
  }
  set_pose(state, pose, false);
  return state;
}

MatX Simulator::mass_matrix(const VecX& q) const {
  Frames f;
  kinematics(q, f);
  return f.M;
}

double Simulator::kinetic_energy(const SimState& state) const {
  Frames f;
  kinematics(state.q, f);
  const VecX nu = to_internal(state.q, state.qd);
  return 0.5 * nu.dot(f.M * nu);
}

double Simulator::potential_energy(const SimState& state) const {
  const auto poses = forward_kinematics(state.q);
  double e = 0.0;
  for (int i = 0; i < spec_.num_links(); ++i)
    e += spec_.links[i].mass * spec_.physics.gravity * poses[i].apply(spec_.links[i].com).y();
  return e;
}

Vec6 Simulator::momentum(const SimState& state) const {
  Frames f;
  kinematics(state.q, f);
  velocities(to_internal(state.q, state.qd), f);
  return f.sub_momentum[0];
}

Vec3 Simulator::center_of_mass(const SimState& state) const {
  const auto poses = forward_kinematics(state.q);
  Vec3 c = Vec3::Zero();
  for (int i = 0; i < spec_.num_links(); ++i) c += spec_.links[i].mass * poses[i].apply(spec_.links[i].com);
  return c / total_mass_;
}

}  // namespace retarget
