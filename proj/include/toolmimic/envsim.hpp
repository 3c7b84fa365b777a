#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toolmimic/geometry.hpp"
#include "toolmimic/kinematics.hpp"
#include "toolmimic/scene.hpp"

namespace toolmimic {

enum class EnvKind { kSpade, kHammer, kScythe };

EnvKind env_kind_from_string(const std::string& s);
std::string to_string(EnvKind kind);

/// Fixed-step simplified physics configuration. All sizes are in meters,
/// all rates in SI units. Every value here is overridable from the run
/// config file.
struct EnvConfig {
  EnvKind kind = EnvKind::kSpade;
  double control_dt = 1.0 / 24.0;
  int substeps = 10;
  int horizon = 120;
  std::uint64_t seed = 0;
  double gravity = 9.81;

  // tool geometry: the tool frame sits at the segment midpoint with the
  // x axis pointing toward the head end
  double tool_length = 1.0;

  // spade
  int sphere_count = 20;
  double sphere_radius = 0.03;
  double friction = 0.8;
  Vec3 deposit_extents = Vec3(0.4, 0.4, 0.15);   // footprint x,y + wall height
  Vec3 goal_box_extents = Vec3(0.4, 0.4, 0.2);   // footprint x,y + wall height
  double wall_thickness = 0.02;
  Vec3 blade_extents = Vec3(0.25, 0.30, 0.02);   // scoop plate at the head end

  // hammer
  double nail_travel = 0.1;           // d_z starts here, fully out
  double nail_head_radius = 0.02;
  Vec3 hammer_head_extents = Vec3(0.1, 0.1, 0.1);
  double nail_drive_rate = 0.08;      // depth decrease = rate * speed * dt
  double nail_min_speed = 0.5;        // m/s downward to move the nail

  // scythe
  int grass_count = 16;
  Vec3 grass_extents = Vec3(0.02, 0.02, 0.3);
  Vec3 patch_extents = Vec3(0.6, 0.6, 0.0);      // scatter rectangle
  double cut_z_max = 0.05;            // z_max
  double cut_min_speed = 0.5;         // v_min
  double edge_radius = 0.01;          // tool edge contact radius

  double dense_length_scale = 5.0;    // b in the dense-reward formulas
};

/// Mutable simulation state. Which fields are live depends on the env kind.
struct EnvState {
  int steps_done = 0;
  bool done = false;
  ToolPose tool_pose;
  ToolPose prev_tool_pose;

  // spade
  std::vector<Vec3> sphere_pos;
  std::vector<Vec3> sphere_vel;
  std::vector<bool> sphere_delivered;  // sticky, for cumulative reward

  // hammer
  double nail_depth = 0.0;  // remaining travel; 0 = fully planted

  // scythe
  std::vector<Vec3> grass_base;  // blade base centers on the ground
  std::vector<bool> grass_cut;
};

struct StepInfo {
  int spheres_in_box = 0;   // per-step containment count
  int delivered_total = 0;  // sticky cumulative count
  double nail_depth = 0.0;
  int blades_cut_total = 0;
};

struct StepOutcome {
  double sparse_reward = 0.0;  // r^g_t
  double dense_reward = 0.0;   // r^d_t
  bool done = false;
  StepInfo info;
};

/// One line of an episode trace; step indices are 1-based.
struct StepRecord {
  int step = 0;
  ToolPose tool_pose;
  double sparse_reward = 0.0;
  double dense_reward = 0.0;
  StepInfo info;
};
using EpisodeTrace = std::vector<StepRecord>;

/// Deterministic simplified rigid-body environment for the spade, hammer
/// and scythe tasks. The tool is kinematic: it follows commanded poses and
/// pushes scene bodies, nothing pushes back. One instance is single-owner.
class Environment {
 public:
  /// Validates that params carry the objects the env kind requires
  /// (spade: deposit + goal_box; hammer: nail; scythe: grass_patch).
  Environment(const EnvConfig& config, const SceneParams& params);

  /// Deterministic initial state for (config.seed, params); the tool is
  /// teleported to `initial_pose` with zero velocity.
  void reset(const ToolPose& initial_pose);

  /// Advance one control step toward `pose`, interpolating the tool across
  /// substeps. Throws std::invalid_argument on non-finite poses and
  /// std::logic_error after the episode is done.
  StepOutcome step_tool(const ToolPose& pose);

  const EnvConfig& config() const { return config_; }
  const SceneParams& params() const { return params_; }
  const EnvState& state() const { return state_; }
  const EpisodeTrace& trace() const { return trace_; }

  /// Names of the placed objects in the fixed order used for ADR state
  /// extension.
  std::vector<std::string> object_names() const;
  Vec3 object_position(const std::string& name) const;
  /// Move an object (used by domain randomization between episodes).
  void set_object_position(const std::string& name, const Vec3& position);

  /// World-space helpers used by the dense reward and its test oracle.
  Vec3 tool_tip() const;      // head end of the tool segment
  Vec3 deposit_center() const;
  Vec3 goal_center() const;
  Vec3 nail_head() const;     // (x, y, depth)
  Vec3 patch_point_a() const;
  Vec3 patch_point_b() const;
  Quat patch_reference_rotation() const;

 private:
  double substep(const ToolPose& p0, const ToolPose& p1, double dt);
  StepInfo current_info() const;
  void collide_sphere_world(int i, const ToolPose& p0, const ToolPose& p1,
                            double dt);

  EnvConfig config_;
  SceneParams params_;
  EnvState state_;
  EpisodeTrace trace_;
};

/// Dense shaped reward r^d_t for the env's current state, using the step
/// index of the last completed step. Implements the per-task exponential
/// distance formulas; bounded by 2/H (spade, scythe) or 1/H (hammer).
double dense_reward(const Environment& env);

/// Success predicates over a complete episode trace (1 second = 24 steps):
/// spade: >= 10 spheres in the goal box for at least half of the episode;
/// hammer: nail planted (depth < 0.001) by step 24;
/// scythe: all grass cut by step 24.
bool success(const EpisodeTrace& trace, EnvKind kind, int grass_total = 0,
             int steps_per_second = 24);

/// Episode trace dump, one record per step, delimited text.
void save_trace(const EpisodeTrace& trace, const std::string& path);
EpisodeTrace load_trace(const std::string& path);

}  // namespace toolmimic
