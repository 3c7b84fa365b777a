#pragma once

#include <string>
#include <vector>

#include "toolmimic/geometry.hpp"

namespace toolmimic {

enum class JointType { kRevolute, kPrismatic };

struct Joint {
  JointType type = JointType::kRevolute;
  Vec3 axis = Vec3::UnitZ();        // unit vector in the joint's local frame
  RigidTransform origin;            // parent link frame -> joint frame
  double limit_lo = -kPi;
  double limit_hi = kPi;
  double velocity_limit = 1.0;      // max |v|, rad/s or m/s
};

/// Serial kinematic chain with a tool rigidly mounted on the last link.
/// Loaded from a chain-description file, see load_chain().
struct KinematicChain {
  std::string name;
  std::vector<Joint> joints;
  RigidTransform tool_mount;        // last link frame -> tool reference frame

  int dof() const { return static_cast<int>(joints.size()); }

  VecX limits_lo() const;
  VecX limits_hi() const;
  VecX velocity_limits() const;
  /// Mid-range configuration, the default q0 for tracking problems.
  VecX mid_configuration() const;

  /// Throws std::invalid_argument if any invariant is broken
  /// (non-unit axis, lo >= hi, non-positive velocity limit).
  void validate() const;
};

/// Ground-plane robot placement: position (x, y) and yaw at fixed height.
struct BaseMount {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;     // wrapped to [-pi, pi)
  double height = 0.0;  // z_b, config constant

  RigidTransform transform() const {
    return {Vec3(x, y, height), quat_from_axis_angle(Vec3::UnitZ(), yaw)};
  }
};

/// Pose of the tool reference frame in world coordinates.
struct ToolPose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

/// World pose of the tool frame for configuration q.
/// Throws std::invalid_argument on dimension mismatch.
ToolPose forward_kinematics(const KinematicChain& chain, const BaseMount& base,
                            const VecX& q);

/// Geometric tool Jacobian, 6xN: rows 0-2 linear (m/rad or m/m),
/// rows 3-5 angular (rad/rad; zero for prismatic joints). Column i is the
/// instantaneous tool twist per unit velocity of joint i.
MatX tool_jacobian(const KinematicChain& chain, const BaseMount& base,
                   const VecX& q);

/// Quadratic-hinge joint-limit cost: sum of max(0, q-hi)^2 + max(0, lo-q)^2.
/// Zero strictly inside the limits, C1 everywhere.
struct BarrierValue {
  double value = 0.0;
  VecX gradient;
  VecX hessian_diag;
};
BarrierValue joint_limit_barrier(const KinematicChain& chain, const VecX& q);

/// Parse a chain-description file. Format (one record per line, '#' comments):
///   name <string>
///   joint <revolute|prismatic> axis <x y z> xyz <x y z> quat <w x y z>
///         limits <lo hi> vel <max>
///   tool_mount xyz <x y z> quat <w x y z>
/// Throws std::runtime_error naming the offending line on malformed input.
KinematicChain load_chain(const std::string& path);
void save_chain(const KinematicChain& chain, const std::string& path);

}  // namespace toolmimic
