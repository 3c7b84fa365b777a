#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toolmimic/envsim.hpp"
#include "toolmimic/kinematics.hpp"

namespace toolmimic {

/// Rectangle + yaw interval the base mount is searched over.
struct BaseSearchRegion {
  double x_lo = -1.0, x_hi = 1.0;
  double y_lo = -1.0, y_hi = 1.0;
  double yaw_lo = 0.0, yaw_hi = 0.0;
  double height = 0.0;  // fixed z_b
};

struct TrackingWeights {
  double velocity = 1e-3;     // w_v
  double barrier = 1e2;       // w_b
  double orientation = 0.1;   // w_R, m^2/rad^2
};

/// Track target tool poses with a single-integrator joint model
/// q_{t+1} = q_t + v_t * dt, q_0 given and constant.
struct TrackingProblem {
  KinematicChain chain;
  std::vector<ToolPose> targets;  // p_0 .. p_T
  double dt = 1.0 / 24.0;
  VecX q0;                        // defaults to mid-range when empty
  TrackingWeights weights;
  BaseSearchRegion base_region;
  int max_iterations = 200;
  double cost_tolerance = 1e-8;   // relative decrease per accepted iteration

  void validate() const;
};

/// Stage cost of Eq-style tracking: squared position distance to the target
/// plus weighted squared orientation geodesic angle, velocity regularization
/// and the joint-limit barrier. Gradients are exact; the Hessian blocks are
/// Gauss-Newton (FK second derivatives omitted).
struct StageCost {
  double value = 0.0;
  VecX grad_q;
  VecX grad_v;
  MatX hess_qq;
  MatX hess_vv;
};
StageCost stage_cost(const KinematicChain& chain, const BaseMount& base,
                     const VecX& q, const VecX& v, const ToolPose& target,
                     const TrackingWeights& weights);

struct TrackingErrorStats {
  double mean_position = 0.0;
  double max_position = 0.0;
  double mean_orientation = 0.0;
  double max_orientation = 0.0;
};

struct VelocitySolution {
  std::vector<VecX> velocities;  // v_0 .. v_{T-1}, v_t applied at state t
  std::vector<VecX> states;      // q_0 .. q_T
  double cost = 0.0;
  std::vector<double> cost_trace;  // accepted iterations, nonincreasing
  int iterations = 0;
};

/// iLQR on the single-integrator system: regularized Gauss-Newton backward
/// pass, backtracking-line-search forward pass. The returned cost never
/// exceeds the zero-velocity rollout cost. Throws on non-finite costs.
VelocitySolution solve_velocities(const TrackingProblem& problem,
                                  const BaseMount& base);

struct BaseSearchSettings {
  int grid_x = 5;
  int grid_y = 5;
  int grid_yaw = 4;
  int cem_iterations = 10;
  int cem_population = 16;
  int cem_elites = 4;
  int threads = 1;
};

struct TrackingSolution {
  BaseMount base;
  std::vector<VecX> velocities;
  std::vector<VecX> states;
  double cost = 0.0;
  std::vector<double> cost_trace;
  TrackingErrorStats error;
};

/// Joint base placement + velocity optimization: a coarse grid over
/// (x, y, yaw), every grid cell refined by cross-entropy sampling seeded
/// from the cell coordinates, one inner solve per candidate. The best
/// candidate over the union wins, so enlarging the candidate set can only
/// improve the returned cost. Deterministic, independent of thread count.
TrackingSolution solve_with_base(const TrackingProblem& problem,
                                 const BaseSearchSettings& settings = {});

/// One behavior-cloning pair: the state vector observed at a step and the
/// joint velocity commanded from it.
struct DemoPair {
  VecX state;
  VecX action;
};

struct DemoRollout {
  std::vector<DemoPair> pairs;
  double goal_reward = 0.0;   // episode total r^g
  EpisodeTrace trace;
};

/// State vector layout: tool position (3), tool orientation quaternion
/// wxyz (4), joint positions (N), normalized time t/H (1) => M = 7 + N + 1.
VecX assemble_state(const ToolPose& pose, const VecX& q, int step, int horizon);

/// Execute the solved velocities in the environment with the tool rigidly
/// attached at the FK pose; record (state, action) pairs for behavior
/// cloning and the episode goal reward.
DemoRollout rollout_demo(const KinematicChain& chain,
                         const TrackingSolution& solution, Environment& env);

/// Solution artifact file: base mount, per-step q and v, cost trace.
void save_solution(const TrackingSolution& solution, const std::string& path);
TrackingSolution load_solution(const std::string& path);

void save_demo_pairs(const std::vector<DemoPair>& pairs,
                     const std::string& path);
std::vector<DemoPair> load_demo_pairs(const std::string& path);

}  // namespace toolmimic
