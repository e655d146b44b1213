#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

namespace retarget {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kPi = std::numbers::pi;

/// World convention: y is up, characters face +z, +x is the character's left.
inline Vec3 up_axis() { return Vec3::UnitY(); }
inline Vec3 forward_axis() { return Vec3::UnitZ(); }

/// Rigid transform: x_world = rotation * x_local + translation.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Pose inverse() const {
    Quat inv = rotation.conjugate();
    return {inv, -(inv * translation)};
  }
};

inline Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

/// Rotation vector (axis * angle) of a unit quaternion, angle in [0, pi].
inline Vec3 rotation_vector(const Quat& q_in) {
  Quat q = q_in.w() < 0.0 ? Quat(-q_in.coeffs()) : q_in;
  const double s = q.vec().norm();
  if (s < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(s, q.w());
  return q.vec() * (angle / s);
}

/// Angle of the relative rotation between a and b, in [0, pi].
inline double rotation_distance(const Quat& a, const Quat& b) {
  return rotation_vector(a * b.conjugate()).norm();
}

inline Quat quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a;
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Yaw about +y of the frame's forward (+z) axis; falls back to the lateral
/// (+x) axis when forward is nearly vertical.
double heading_yaw(const Quat& orientation);

/// First two columns of the rotation matrix, column-major (6 values).
inline std::array<double, 6> rot6(const Mat3& r) {
  return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

/// Decomposes r = R(u1, a1) R(u2, a2) R(u3, a3) for orthonormal axes u1, u2,
/// u3 (either handedness). Returns {a1, a2, a3}.
std::array<double, 3> euler_decompose(const Mat3& r, const Vec3& u1, const Vec3& u2,
                                      const Vec3& u3);

/// Angle of the twist component of q about `axis` (swing-twist split).
double twist_angle(const Quat& q, const Vec3& axis);

/// Unit vector for 'x' / 'y' / 'z' (case-insensitive).
Vec3 axis_from_char(char c);

}  // namespace retarget
