#include "retarget/math.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace retarget {

double heading_yaw(const Quat& orientation) {
  Vec3 f = orientation * forward_axis();
  f.y() = 0.0;
  if (f.norm() >= 1e-6) return std::atan2(f.x(), f.z());
  // Forward axis is vertical; the lateral axis is then horizontal. Lateral
  // +x corresponds to yaw + pi/2 of the forward direction.
  Vec3 l = orientation * Vec3::UnitX();
  return std::atan2(-l.z(), l.x());
}

std::array<double, 3> euler_decompose(const Mat3& r, const Vec3& u1, const Vec3& u2,
                                      const Vec3& u3) {
  Mat3 basis;
  const Vec3 c = u1.cross(u2);
  basis.col(0) = u1;
  basis.col(1) = u2;
  basis.col(2) = c;
  const Mat3 m = basis.transpose() * r * basis;
  // m = Rx(a) Ry(b) Rz(g)
  const double sb = std::clamp(m(0, 2), -1.0, 1.0);
  double a, b, g;
  b = std::asin(sb);
  if (std::abs(sb) < 1.0 - 1e-12) {
    a = std::atan2(-m(1, 2), m(2, 2));
    g = std::atan2(-m(0, 1), m(0, 0));
  } else {
    // gimbal lock: only a +/- g is determined
    g = 0.0;
    a = std::atan2(m(2, 1), m(1, 1));
  }
  const double handed = u3.dot(c) < 0.0 ? -1.0 : 1.0;
  return {a, b, handed * g};
}

double twist_angle(const Quat& q, const Vec3& axis) {
  const Vec3 n = axis.normalized();
  const double proj = q.vec().dot(n);
  return wrap_angle(2.0 * std::atan2(proj, q.w()));
}

Vec3 axis_from_char(char c) {
  switch (c) {
    case 'x':
    case 'X':
      return Vec3::UnitX();
    case 'y':
    case 'Y':
      return Vec3::UnitY();
    case 'z':
    case 'Z':
      return Vec3::UnitZ();
    default:
      throw std::invalid_argument(std::string("unknown axis '") + c + "'");
  }
}

}  // namespace retarget
