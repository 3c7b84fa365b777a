#include "toolmimic/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "toolmimic/io.hpp"
#include "toolmimic/rng.hpp"

namespace toolmimic {

EnvKind env_kind_from_string(const std::string& s) {
  if (s == "spade") return EnvKind::kSpade;
  if (s == "hammer") return EnvKind::kHammer;
  if (s == "scythe") return EnvKind::kScythe;
  throw std::invalid_argument("unknown env kind '" + s + "'");
}

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::kSpade: return "spade";
    case EnvKind::kHammer: return "hammer";
    case EnvKind::kScythe: return "scythe";
  }
  return "?";
}

namespace {

constexpr std::uint64_t kScatterStream = 0x5ca77e7;

/// Oriented box for sphere contacts. Static walls use yaw-only rotations;
/// the tool blade uses the full tool orientation.
struct Obb {
  Vec3 center = Vec3::Zero();
  Quat rotation = Quat::Identity();
  Vec3 half = Vec3::Zero();

  struct Contact {
    bool hit = false;
    Vec3 normal = Vec3::Zero();
    double depth = 0.0;
    Vec3 point = Vec3::Zero();
  };

  Contact sphere_contact(const Vec3& p, double radius) const {
    Contact c;
    const Vec3 local = rotation.conjugate() * (p - center);
    const Vec3 clamped = local.cwiseMax(-half).cwiseMin(half);
    const Vec3 delta = local - clamped;
    const double dist2 = delta.squaredNorm();
    if (dist2 > radius * radius && dist2 > 0.0) return c;
    if (dist2 > 0.0) {
      const double dist = std::sqrt(dist2);
      c.hit = true;
      c.normal = rotation * (delta / dist);
      c.depth = radius - dist;
      c.point = rotation * clamped + center;
      return c;
    }
    // center inside the box: push out along the shallowest face
    int axis = 0;
    double best = half[0] - std::abs(local[0]);
    for (int a = 1; a < 3; ++a) {
      const double d = half[a] - std::abs(local[a]);
      if (d < best) {
        best = d;
        axis = a;
      }
    }
    Vec3 n = Vec3::Zero();
    n[axis] = local[axis] >= 0.0 ? 1.0 : -1.0;
    c.hit = true;
    c.normal = rotation * n;
    c.depth = best + radius;
    c.point = p - c.normal * best;
    return c;
  }
};

Quat yaw_quat(double yaw) { return quat_from_axis_angle(Vec3::UnitZ(), yaw); }

ToolPose interpolate(const ToolPose& a, const ToolPose& b, double t) {
  ToolPose p;
  p.position = a.position + t * (b.position - a.position);
  p.orientation = a.orientation.slerp(t, b.orientation);
  return p;
}

/// Linear + angular velocity of a pose motion over dt.
struct Twist {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
};

Twist pose_twist(const ToolPose& from, const ToolPose& to, double dt) {
  Twist tw;
  tw.linear = (to.position - from.position) / dt;
  const Quat dq = (to.orientation * from.orientation.conjugate()).normalized();
  Eigen::AngleAxisd aa(dq);
  double angle = aa.angle();
  if (angle > kPi) angle -= 2.0 * kPi;
  tw.angular = aa.axis() * (angle / dt);
  return tw;
}

/// Closest points between segments [p0,p1] and [q0,q1].
/// Returns (s, t) parameters in [0,1].
std::pair<double, double> closest_segment_params(const Vec3& p0, const Vec3& p1,
                                                 const Vec3& q0,
                                                 const Vec3& q1) {
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-16 && e <= 1e-16) return {0.0, 0.0};
  if (a <= 1e-16) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-16) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      if (denom > 1e-16) {
        s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      }
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return {s, t};
}

void require_object(const SceneParams& params, const std::string& name,
                    EnvKind kind) {
  if (params.object_positions.count(name) == 0) {
    throw std::invalid_argument(to_string(kind) + " env requires object '" +
                                name + "'");
  }
}

}  // namespace

Environment::Environment(const EnvConfig& config, const SceneParams& params)
    : config_(config), params_(params) {
  if (config_.control_dt <= 0.0 || config_.substeps < 1 ||
      config_.horizon < 1) {
    throw std::invalid_argument("invalid env config");
  }
  switch (config_.kind) {
    case EnvKind::kSpade:
      require_object(params_, "deposit", config_.kind);
      require_object(params_, "goal_box", config_.kind);
      break;
    case EnvKind::kHammer:
      require_object(params_, "nail", config_.kind);
      break;
    case EnvKind::kScythe:
      require_object(params_, "grass_patch", config_.kind);
      break;
  }
}

std::vector<std::string> Environment::object_names() const {
  std::vector<std::string> names;
  for (const auto& [name, pos] : params_.object_positions) names.push_back(name);
  return names;
}

Vec3 Environment::object_position(const std::string& name) const {
  const auto it = params_.object_positions.find(name);
  if (it == params_.object_positions.end()) {
    throw std::invalid_argument("no object '" + name + "' in scene");
  }
  return Vec3(it->second.x(), it->second.y(), 0.0);
}

void Environment::set_object_position(const std::string& name,
                                      const Vec3& position) {
  const auto it = params_.object_positions.find(name);
  if (it == params_.object_positions.end()) {
    throw std::invalid_argument("no object '" + name + "' in scene");
  }
  it->second = position;
}

Vec3 Environment::tool_tip() const {
  return state_.tool_pose.position +
         state_.tool_pose.orientation * Vec3(0.5 * config_.tool_length, 0, 0);
}

Vec3 Environment::deposit_center() const { return object_position("deposit"); }
Vec3 Environment::goal_center() const { return object_position("goal_box"); }

Vec3 Environment::nail_head() const {
  const Vec3 p = object_position("nail");
  return Vec3(p.x(), p.y(), state_.nail_depth);
}

namespace {
double object_yaw(const SceneParams& params, const std::string& name) {
  const auto it = params.object_yaws.find(name);
  return it == params.object_yaws.end() ? 0.0 : it->second;
}
}  // namespace

Vec3 Environment::patch_point_a() const {
  const Vec3 c = object_position("grass_patch");
  const double yaw = object_yaw(params_, "grass_patch");
  return c + yaw_quat(yaw) * Vec3(-0.5 * config_.patch_extents.x(), 0, 0);
}

Vec3 Environment::patch_point_b() const {
  const Vec3 c = object_position("grass_patch");
  const double yaw = object_yaw(params_, "grass_patch");
  return c + yaw_quat(yaw) * Vec3(0.5 * config_.patch_extents.x(), 0, 0);
}

Quat Environment::patch_reference_rotation() const {
  return yaw_quat(object_yaw(params_, "grass_patch"));
}

void Environment::reset(const ToolPose& initial_pose) {
  state_ = EnvState{};
  trace_.clear();
  state_.tool_pose = initial_pose;
  state_.prev_tool_pose = initial_pose;

  Rng rng(derive_seed(config_.seed, kScatterStream));
  switch (config_.kind) {
    case EnvKind::kSpade: {
      state_.sphere_pos.resize(config_.sphere_count);
      state_.sphere_vel.assign(config_.sphere_count, Vec3::Zero());
      state_.sphere_delivered.assign(config_.sphere_count, false);
      const Vec3 center = deposit_center();
      const double yaw = object_yaw(params_, "deposit");
      const Quat rot = yaw_quat(yaw);
      // jittered grid resting on the ground inside the walls
      const double r = config_.sphere_radius;
      const double hx = 0.5 * config_.deposit_extents.x() -
                        config_.wall_thickness - r;
      const double hy = 0.5 * config_.deposit_extents.y() -
                        config_.wall_thickness - r;
      const int cols =
          std::max(1, static_cast<int>(std::ceil(std::sqrt(
                         static_cast<double>(config_.sphere_count)))));
      const int rows =
          (config_.sphere_count + cols - 1) / cols;
      for (int i = 0; i < config_.sphere_count; ++i) {
        const int cx = i % cols;
        const int cy = i / cols;
        const double fx = cols == 1 ? 0.0 : (2.0 * cx / (cols - 1) - 1.0);
        const double fy = rows == 1 ? 0.0 : (2.0 * cy / (rows - 1) - 1.0);
        const double jitter = 0.2 * r;
        Vec3 local(fx * (hx - jitter) + rng.uniform(-jitter, jitter),
                   fy * (hy - jitter) + rng.uniform(-jitter, jitter), r);
        state_.sphere_pos[i] = center + rot * local;
        state_.sphere_pos[i].z() = r;
      }
      break;
    }
    case EnvKind::kHammer:
      state_.nail_depth = config_.nail_travel;
      break;
    case EnvKind::kScythe: {
      state_.grass_base.resize(config_.grass_count);
      state_.grass_cut.assign(config_.grass_count, false);
      const Vec3 center = object_position("grass_patch");
      const double yaw = object_yaw(params_, "grass_patch");
      const Quat rot = yaw_quat(yaw);
      const double hx = 0.5 * config_.patch_extents.x();
      const double hy = 0.5 * config_.patch_extents.y();
      for (int i = 0; i < config_.grass_count; ++i) {
        Vec3 local(rng.uniform(-hx, hx), rng.uniform(-hy, hy), 0.0);
        state_.grass_base[i] = center + rot * local;
        state_.grass_base[i].z() = 0.0;
      }
      break;
    }
  }
}

StepInfo Environment::current_info() const {
  StepInfo info;
  info.nail_depth = state_.nail_depth;
  if (config_.kind == EnvKind::kSpade) {
    const Vec3 center = goal_center();
    const Quat rot = yaw_quat(object_yaw(params_, "goal_box"));
    const double ix = 0.5 * config_.goal_box_extents.x() - config_.wall_thickness;
    const double iy = 0.5 * config_.goal_box_extents.y() - config_.wall_thickness;
    const double iz = config_.goal_box_extents.z();
    for (int i = 0; i < config_.sphere_count; ++i) {
      const Vec3 local = rot.conjugate() * (state_.sphere_pos[i] - center);
      const bool inside = std::abs(local.x()) <= ix &&
                          std::abs(local.y()) <= iy && local.z() >= 0.0 &&
                          local.z() <= iz;
      if (inside) ++info.spheres_in_box;
      if (state_.sphere_delivered[i]) ++info.delivered_total;
    }
  }
  if (config_.kind == EnvKind::kScythe) {
    for (const bool cut : state_.grass_cut) {
      if (cut) ++info.blades_cut_total;
    }
  }
  return info;
}

void Environment::collide_sphere_world(int i, const ToolPose& p0,
                                       const ToolPose& p1, double dt) {
  const double r = config_.sphere_radius;
  const double mu = config_.friction;
  Vec3& pos = state_.sphere_pos[i];
  Vec3& vel = state_.sphere_vel[i];

  auto resolve = [&](const Vec3& normal, double depth, const Vec3& surf_vel) {
    pos += normal * depth;
    const Vec3 vrel = vel - surf_vel;
    const double vn = vrel.dot(normal);
    if (vn < 0.0) {
      vel -= normal * vn;  // restitution 0
      Vec3 vt = vrel - normal * vn;
      const double vt_norm = vt.norm();
      if (vt_norm > 1e-12) {
        const double cap = std::min(mu * (-vn), vt_norm);
        vel -= vt / vt_norm * cap;
      }
    }
  };

  // ground plane
  if (pos.z() < r) {
    resolve(Vec3::UnitZ(), r - pos.z(), Vec3::Zero());
  }

  // static walls: deposit (3 walls, open toward local +x) and goal box (4)
  auto collide_walls = [&](const Vec3& center, double yaw, const Vec3& extents,
                           bool closed) {
    const Quat rot = yaw_quat(yaw);
    const double hx = 0.5 * extents.x();
    const double hy = 0.5 * extents.y();
    const double hw = 0.5 * config_.wall_thickness;
    const double hz = 0.5 * extents.z();
    std::vector<Obb> walls;
    walls.push_back({center + rot * Vec3(-hx + hw, 0, hz), rot,
                     Vec3(hw, hy, hz)});
    walls.push_back({center + rot * Vec3(0, -hy + hw, hz), rot,
                     Vec3(hx, hw, hz)});
    walls.push_back({center + rot * Vec3(0, hy - hw, hz), rot,
                     Vec3(hx, hw, hz)});
    if (closed) {
      walls.push_back({center + rot * Vec3(hx - hw, 0, hz), rot,
                       Vec3(hw, hy, hz)});
    }
    for (const Obb& wall : walls) {
      const auto c = wall.sphere_contact(pos, r);
      if (c.hit) resolve(c.normal, c.depth, Vec3::Zero());
    }
  };
  collide_walls(deposit_center(), object_yaw(params_, "deposit"),
                config_.deposit_extents, false);
  collide_walls(goal_center(), object_yaw(params_, "goal_box"),
                config_.goal_box_extents, true);

  // kinematic spade blade at the head end of the tool
  Obb blade;
  blade.half = 0.5 * config_.blade_extents;
  blade.rotation = p1.orientation;
  blade.center =
      p1.position + p1.orientation * Vec3(0.5 * config_.tool_length, 0, 0);
  const auto c = blade.sphere_contact(pos, r);
  if (c.hit) {
    const Twist tw = pose_twist(p0, p1, dt);
    const Vec3 surf_vel = tw.linear + tw.angular.cross(c.point - p1.position);
    resolve(c.normal, c.depth, surf_vel);
  }
}

double Environment::substep(const ToolPose& p0, const ToolPose& p1, double dt) {
  double reward = 0.0;
  switch (config_.kind) {
    case EnvKind::kSpade: {
      const double r = config_.sphere_radius;
      for (int i = 0; i < config_.sphere_count; ++i) {
        state_.sphere_vel[i].z() -= config_.gravity * dt;
        state_.sphere_pos[i] += state_.sphere_vel[i] * dt;
      }
      // sphere-sphere, equal masses, restitution 0
      for (int i = 0; i < config_.sphere_count; ++i) {
        for (int j = i + 1; j < config_.sphere_count; ++j) {
          Vec3 d = state_.sphere_pos[j] - state_.sphere_pos[i];
          const double dist = d.norm();
          if (dist >= 2.0 * r || dist < 1e-12) continue;
          const Vec3 n = d / dist;
          const double pen = 2.0 * r - dist;
          state_.sphere_pos[i] -= 0.5 * pen * n;
          state_.sphere_pos[j] += 0.5 * pen * n;
          const double vn =
              (state_.sphere_vel[j] - state_.sphere_vel[i]).dot(n);
          if (vn < 0.0) {
            state_.sphere_vel[i] += 0.5 * vn * n;
            state_.sphere_vel[j] -= 0.5 * vn * n;
          }
        }
      }
      for (int i = 0; i < config_.sphere_count; ++i) {
        collide_sphere_world(i, p0, p1, dt);
      }
      break;
    }
    case EnvKind::kHammer: {
      if (state_.nail_depth > 0.0) {
        Obb head;
        head.half = 0.5 * config_.hammer_head_extents;
        head.rotation = p1.orientation;
        head.center =
            p1.position + p1.orientation * Vec3(0.5 * config_.tool_length, 0, 0);
        const Twist tw = pose_twist(p0, p1, dt);
        const Vec3 head_vel =
            tw.linear + tw.angular.cross(head.center - p1.position);
        const auto c = head.sphere_contact(nail_head(), config_.nail_head_radius);
        if (c.hit && head_vel.z() <= -config_.nail_min_speed) {
          state_.nail_depth -= config_.nail_drive_rate * (-head_vel.z()) * dt;
          state_.nail_depth = std::max(0.0, state_.nail_depth);
        }
      }
      break;
    }
    case EnvKind::kScythe: {
      const Vec3 half_edge =
          p1.orientation * Vec3(0.5 * config_.tool_length, 0, 0);
      const Vec3 e0 = p1.position - half_edge;
      const Vec3 e1 = p1.position + half_edge;
      const Twist tw = pose_twist(p0, p1, dt);
      const double reach = config_.edge_radius +
                           0.5 * config_.grass_extents.head<2>().norm();
      for (int i = 0; i < config_.grass_count; ++i) {
        if (state_.grass_cut[i]) continue;
        const Vec3 g0 = state_.grass_base[i];
        const Vec3 g1 = g0 + Vec3(0, 0, config_.grass_extents.z());
        const auto [s, t] = closest_segment_params(e0, e1, g0, g1);
        const Vec3 on_edge = e0 + s * (e1 - e0);
        const Vec3 on_grass = g0 + t * (g1 - g0);
        if ((on_edge - on_grass).norm() > reach) continue;
        if (on_grass.z() > config_.cut_z_max) continue;
        const Vec3 edge_vel =
            tw.linear + tw.angular.cross(on_edge - p1.position);
        if (edge_vel.head<2>().norm() >= config_.cut_min_speed) {
          state_.grass_cut[i] = true;
          reward += 1.0;
        }
      }
      break;
    }
  }
  return reward;
}

StepOutcome Environment::step_tool(const ToolPose& pose) {
  if (state_.done) {
    throw std::logic_error("step_tool called on a finished episode");
  }
  if (!pose.position.allFinite() || !pose.orientation.coeffs().allFinite()) {
    throw std::invalid_argument("non-finite tool pose");
  }

  const ToolPose from = state_.tool_pose;
  const double sub_dt = config_.control_dt / config_.substeps;
  double sparse = 0.0;
  for (int s = 0; s < config_.substeps; ++s) {
    const double a0 = static_cast<double>(s) / config_.substeps;
    const double a1 = static_cast<double>(s + 1) / config_.substeps;
    const ToolPose p0 = interpolate(from, pose, a0);
    const ToolPose p1 = interpolate(from, pose, a1);
    sparse += substep(p0, p1, sub_dt);
  }
  state_.prev_tool_pose = from;
  state_.tool_pose = pose;

  if (config_.kind == EnvKind::kSpade) {
    // newly delivered spheres, counted once each (sticky)
    const Vec3 center = goal_center();
    const Quat rot = yaw_quat(object_yaw(params_, "goal_box"));
    const double ix = 0.5 * config_.goal_box_extents.x() - config_.wall_thickness;
    const double iy = 0.5 * config_.goal_box_extents.y() - config_.wall_thickness;
    const double iz = config_.goal_box_extents.z();
    for (int i = 0; i < config_.sphere_count; ++i) {
      if (state_.sphere_delivered[i]) continue;
      const Vec3 local = rot.conjugate() * (state_.sphere_pos[i] - center);
      if (std::abs(local.x()) <= ix && std::abs(local.y()) <= iy &&
          local.z() >= 0.0 && local.z() <= iz) {
        state_.sphere_delivered[i] = true;
        sparse += 1.0;
      }
    }
    for (const Vec3& p : state_.sphere_pos) {
      if (!p.allFinite()) {
        throw std::runtime_error("simulation diverged: non-finite sphere state");
      }
    }
  }
  if (config_.kind == EnvKind::kHammer) {
    sparse = state_.nail_depth < 0.001 ? 1.0 : 0.0;
  }

  ++state_.steps_done;
  state_.done = state_.steps_done >= config_.horizon;

  StepOutcome out;
  out.sparse_reward = sparse;
  out.dense_reward = dense_reward(*this);
  out.done = state_.done;
  out.info = current_info();

  StepRecord rec;
  rec.step = state_.steps_done;
  rec.tool_pose = pose;
  rec.sparse_reward = out.sparse_reward;
  rec.dense_reward = out.dense_reward;
  rec.info = out.info;
  trace_.push_back(rec);
  return out;
}

double dense_reward(const Environment& env) {
  const EnvConfig& cfg = env.config();
  const EnvState& st = env.state();
  const double b = cfg.dense_length_scale;
  const double h = static_cast<double>(cfg.horizon);
  const int t = std::max(0, st.steps_done - 1);  // 0-based step index
  auto expdist = [&](const Vec3& a, const Vec3& c) {
    return std::exp(-0.5 * b * (a - c).norm());
  };
  switch (cfg.kind) {
    case EnvKind::kSpade: {
      double r = expdist(env.tool_tip(), env.deposit_center()) / h;
      const int k = cfg.sphere_count;
      for (int i = 0; i < k; ++i) {
        r += expdist(env.goal_center(), st.sphere_pos[i]) / (h * k);
      }
      return r;
    }
    case EnvKind::kHammer:
      return expdist(env.tool_tip(), env.nail_head()) / h;
    case EnvKind::kScythe: {
      double r = 0.0;
      if (t < cfg.horizon / 2) {
        r += expdist(env.tool_tip(), env.patch_point_a()) / h;
      } else {
        r += expdist(env.tool_tip(), env.patch_point_b()) / h;
      }
      const double ang = quat_geodesic_distance(
          st.tool_pose.orientation.normalized(),
          env.patch_reference_rotation());
      r += std::exp(-0.5 * b * ang) / h;
      return r;
    }
  }
  return 0.0;
}

bool success(const EpisodeTrace& trace, EnvKind kind, int grass_total,
             int steps_per_second) {
  if (trace.empty()) return false;
  switch (kind) {
    case EnvKind::kSpade: {
      int steps_with_ten = 0;
      for (const StepRecord& r : trace) {
        if (r.info.spheres_in_box >= 10) ++steps_with_ten;
      }
      return 2 * steps_with_ten >= static_cast<int>(trace.size());
    }
    case EnvKind::kHammer:
      for (const StepRecord& r : trace) {
        if (r.info.nail_depth < 0.001) return r.step <= steps_per_second;
      }
      return false;
    case EnvKind::kScythe:
      if (grass_total <= 0) return false;
      for (const StepRecord& r : trace) {
        if (r.info.blades_cut_total >= grass_total) {
          return r.step <= steps_per_second;
        }
      }
      return false;
  }
  return false;
}

void save_trace(const EpisodeTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# episode trace: step pos_xyz quat_wxyz r_sparse r_dense "
         "in_box delivered nail_depth cut_total\n";
  for (const StepRecord& r : trace) {
    out << r.step << ' '
        << format_doubles({r.tool_pose.position.x(), r.tool_pose.position.y(),
                           r.tool_pose.position.z(),
                           r.tool_pose.orientation.w(),
                           r.tool_pose.orientation.x(),
                           r.tool_pose.orientation.y(),
                           r.tool_pose.orientation.z(), r.sparse_reward,
                           r.dense_reward})
        << ' ' << r.info.spheres_in_box << ' ' << r.info.delivered_total << ' '
        << format_double(r.info.nail_depth) << ' ' << r.info.blades_cut_total
        << "\n";
  }
}

EpisodeTrace load_trace(const std::string& path) {
  TextFile file(path);
  EpisodeTrace trace;
  while (file.next_line()) {
    LineReader r = file.reader();
    StepRecord rec;
    rec.step = static_cast<int>(r.next_int());
    rec.tool_pose.position.x() = r.next_double();
    rec.tool_pose.position.y() = r.next_double();
    rec.tool_pose.position.z() = r.next_double();
    const double w = r.next_double();
    const double x = r.next_double();
    const double y = r.next_double();
    const double z = r.next_double();
    rec.tool_pose.orientation = Quat(w, x, y, z);
    rec.sparse_reward = r.next_double();
    rec.dense_reward = r.next_double();
    rec.info.spheres_in_box = static_cast<int>(r.next_int());
    rec.info.delivered_total = static_cast<int>(r.next_int());
    rec.info.nail_depth = r.next_double();
    rec.info.blades_cut_total = static_cast<int>(r.next_int());
    trace.push_back(rec);
  }
  return trace;
}

}  // namespace toolmimic
