#include "toolmimic/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "toolmimic/io.hpp"

namespace toolmimic {

VecX KinematicChain::limits_lo() const {
  VecX lo(dof());
  for (int i = 0; i < dof(); ++i) lo[i] = joints[i].limit_lo;
  return lo;
}

VecX KinematicChain::limits_hi() const {
  VecX hi(dof());
  for (int i = 0; i < dof(); ++i) hi[i] = joints[i].limit_hi;
  return hi;
}

VecX KinematicChain::velocity_limits() const {
  VecX v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].velocity_limit;
  return v;
}

VecX KinematicChain::mid_configuration() const {
  VecX q(dof());
  for (int i = 0; i < dof(); ++i) {
    q[i] = 0.5 * (joints[i].limit_lo + joints[i].limit_hi);
  }
  return q;
}

void KinematicChain::validate() const {
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const Joint& j = joints[i];
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("chain '" + name + "' joint " +
                                  std::to_string(i) + ": axis not unit-norm");
    }
    if (!(j.limit_lo < j.limit_hi)) {
      throw std::invalid_argument("chain '" + name + "' joint " +
                                  std::to_string(i) + ": limit_lo >= limit_hi");
    }
    if (!(j.velocity_limit > 0.0)) {
      throw std::invalid_argument("chain '" + name + "' joint " +
                                  std::to_string(i) +
                                  ": velocity limit must be positive");
    }
  }
}

namespace {

RigidTransform joint_motion(const Joint& joint, double q) {
  if (joint.type == JointType::kRevolute) {
    return {Vec3::Zero(), quat_from_axis_angle(joint.axis, q)};
  }
  return {joint.axis * q, Quat::Identity()};
}

void check_dim(const KinematicChain& chain, const VecX& q) {
  if (q.size() != chain.dof()) {
    throw std::invalid_argument(
        "configuration has " + std::to_string(q.size()) + " entries, chain '" +
        chain.name + "' has " + std::to_string(chain.dof()) + " joints");
  }
}

}  // namespace

ToolPose forward_kinematics(const KinematicChain& chain, const BaseMount& base,
                            const VecX& q) {
  check_dim(chain, q);
  RigidTransform t = base.transform();
  for (int i = 0; i < chain.dof(); ++i) {
    t = t.compose(chain.joints[i].origin).compose(joint_motion(chain.joints[i], q[i]));
  }
  t = t.compose(chain.tool_mount);
  return {t.translation, t.rotation};
}

MatX tool_jacobian(const KinematicChain& chain, const BaseMount& base,
                   const VecX& q) {
  check_dim(chain, q);
  const int n = chain.dof();
  MatX jac = MatX::Zero(6, n);

  // First pass: world frame of each joint (after its origin, before motion),
  // accumulated to get the tool position.
  std::vector<Vec3> joint_pos(n);
  std::vector<Vec3> joint_axis_world(n);
  RigidTransform t = base.transform();
  for (int i = 0; i < n; ++i) {
    t = t.compose(chain.joints[i].origin);
    joint_pos[i] = t.translation;
    joint_axis_world[i] = t.rotation * chain.joints[i].axis;
    t = t.compose(joint_motion(chain.joints[i], q[i]));
  }
  const Vec3 tool_pos = t.compose(chain.tool_mount).translation;

  for (int i = 0; i < n; ++i) {
    const Vec3& a = joint_axis_world[i];
    if (chain.joints[i].type == JointType::kRevolute) {
      jac.block<3, 1>(0, i) = a.cross(tool_pos - joint_pos[i]);
      jac.block<3, 1>(3, i) = a;
    } else {
      jac.block<3, 1>(0, i) = a;
    }
  }
  return jac;
}

BarrierValue joint_limit_barrier(const KinematicChain& chain, const VecX& q) {
  check_dim(chain, q);
  const int n = chain.dof();
  BarrierValue out;
  out.gradient = VecX::Zero(n);
  out.hessian_diag = VecX::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double over = q[i] - chain.joints[i].limit_hi;
    const double under = chain.joints[i].limit_lo - q[i];
    if (over > 0.0) {
      out.value += over * over;
      out.gradient[i] = 2.0 * over;
      out.hessian_diag[i] = 2.0;
    } else if (under > 0.0) {
      out.value += under * under;
      out.gradient[i] = -2.0 * under;
      out.hessian_diag[i] = 2.0;
    }
  }
  return out;
}

namespace {

Vec3 parse_vec3(LineReader& r) {
  Vec3 v;
  v.x() = r.next_double();
  v.y() = r.next_double();
  v.z() = r.next_double();
  return v;
}

Quat parse_quat(LineReader& r) {
  const double w = r.next_double();
  const double x = r.next_double();
  const double y = r.next_double();
  const double z = r.next_double();
  Quat q(w, x, y, z);
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    r.fail("rotation quaternion is not unit-norm");
  }
  return q.normalized();
}

}  // namespace

KinematicChain load_chain(const std::string& path) {
  TextFile file(path);
  KinematicChain chain;
  bool have_tool_mount = false;
  while (file.next_line()) {
    LineReader r = file.reader();
    const std::string kind = r.next_token();
    if (kind == "name") {
      chain.name = r.next_token();
    } else if (kind == "joint") {
      Joint j;
      const std::string type = r.next_token();
      if (type == "revolute") {
        j.type = JointType::kRevolute;
      } else if (type == "prismatic") {
        j.type = JointType::kPrismatic;
      } else {
        r.fail("unknown joint type '" + type + "'");
      }
      r.expect("axis");
      j.axis = parse_vec3(r);
      r.expect("xyz");
      j.origin.translation = parse_vec3(r);
      r.expect("quat");
      j.origin.rotation = parse_quat(r);
      r.expect("limits");
      j.limit_lo = r.next_double();
      j.limit_hi = r.next_double();
      r.expect("vel");
      j.velocity_limit = r.next_double();
      chain.joints.push_back(j);
    } else if (kind == "tool_mount") {
      r.expect("xyz");
      chain.tool_mount.translation = parse_vec3(r);
      r.expect("quat");
      chain.tool_mount.rotation = parse_quat(r);
      have_tool_mount = true;
    } else {
      r.fail("unknown record '" + kind + "'");
    }
  }
  if (chain.joints.empty()) {
    throw std::runtime_error(path + ": no joint records");
  }
  if (!have_tool_mount) {
    throw std::runtime_error(path + ": missing tool_mount record");
  }
  chain.validate();
  return chain;
}

void save_chain(const KinematicChain& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# kinematic chain description\n";
  if (!chain.name.empty()) out << "name " << chain.name << "\n";
  for (const Joint& j : chain.joints) {
    out << "joint "
        << (j.type == JointType::kRevolute ? "revolute" : "prismatic")
        << " axis " << format_doubles({j.axis.x(), j.axis.y(), j.axis.z()})
        << " xyz "
        << format_doubles({j.origin.translation.x(), j.origin.translation.y(),
                           j.origin.translation.z()})
        << " quat "
        << format_doubles({j.origin.rotation.w(), j.origin.rotation.x(),
                           j.origin.rotation.y(), j.origin.rotation.z()})
        << " limits " << format_doubles({j.limit_lo, j.limit_hi}) << " vel "
        << format_double(j.velocity_limit) << "\n";
  }
  out << "tool_mount xyz "
      << format_doubles({chain.tool_mount.translation.x(),
                         chain.tool_mount.translation.y(),
                         chain.tool_mount.translation.z()})
      << " quat "
      << format_doubles({chain.tool_mount.rotation.w(),
                         chain.tool_mount.rotation.x(),
                         chain.tool_mount.rotation.y(),
                         chain.tool_mount.rotation.z()})
      << "\n";
}

}  // namespace toolmimic
