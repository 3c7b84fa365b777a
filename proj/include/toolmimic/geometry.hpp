#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <stdexcept>

namespace toolmimic {

using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

constexpr double kPi = 3.14159265358979323846;

/// Rigid transform as translation + unit quaternion.
struct RigidTransform {
  Vec3 translation = Vec3::Zero();
  Quat rotation = Quat::Identity();

  static RigidTransform Identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform compose(const RigidTransform& rhs) const {
    return {translation + rotation * rhs.translation,
            (rotation * rhs.rotation).normalized()};
  }

  RigidTransform inverse() const {
    const Quat inv = rotation.conjugate();
    return {inv * (-translation), inv};
  }
};

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

/// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Intrinsic distance between two rotations: length of the geodesic arc,
/// 2*acos(|<q1,q2>|), in [0, pi]. Sign-invariant in both arguments.
/// Throws if either quaternion deviates from unit norm by more than 1e-6.
inline double quat_geodesic_distance(const Quat& q1, const Quat& q2) {
  if (std::abs(q1.norm() - 1.0) > 1e-6 || std::abs(q2.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("quat_geodesic_distance: non-unit quaternion");
  }
  const double d = std::abs(q1.coeffs().dot(q2.coeffs()));
  return 2.0 * std::acos(std::min(d, 1.0));
}

/// Rotation taking unit vector a to unit vector b by the minimal rotation
/// (identity if a == b; a 180-degree flip about any perpendicular if a == -b).
inline Quat minimal_rotation(const Vec3& a, const Vec3& b) {
  const double c = a.dot(b);
  const Vec3 axis = a.cross(b);
  const double s = axis.norm();
  if (s < 1e-12) {
    if (c > 0.0) return Quat::Identity();
    // antiparallel: pick any axis orthogonal to a
    Vec3 ortho = a.cross(Vec3::UnitX());
    if (ortho.squaredNorm() < 1e-12) ortho = a.cross(Vec3::UnitY());
    return quat_from_axis_angle(ortho.normalized(), kPi);
  }
  return quat_from_axis_angle(axis / s, std::atan2(s, c));
}

}  // namespace toolmimic
