#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toolmimic/envsim.hpp"
#include "toolmimic/scene.hpp"
#include "toolmimic/trajectory.hpp"

namespace toolmimic {

/// Minimum allowed distance between placed objects:
/// 0.1 * (d_max - d_min) over all pairwise distances of distinct trajectory
/// reference points. Throws if every reference point coincides.
double min_object_distance(const ToolTrajectory& traj,
                           double reference_blend = 0.5);

/// Gaussian mixture over candidate object positions, means at the
/// trajectory keypoints.
struct PlacementDistribution {
  std::vector<Vec3> means;
  Mat3 covariance = Mat3::Identity() * 0.04;  // 0.2^2 default
  std::vector<double> weights;                // same length as means, sum 1

  void validate() const;
  Vec3 sample(Rng& rng) const;
};

PlacementDistribution placement_distribution(const KeypointSet& keypoints,
                                             double sigma,
                                             std::vector<double> weights = {});

/// What a scene sample must contain for an env kind: objects drawn from the
/// placement mixture, which of them get a uniform yaw, how many tool-roll
/// segments the trajectory has, and bounds for auxiliary parameters.
struct SceneTemplate {
  std::vector<std::string> objects;
  std::vector<std::string> yaw_objects;
  int roll_segments = 1;
  ParamBounds aux_bounds;
};

SceneTemplate scene_template_for(EnvKind kind, const KeypointSet& keypoints,
                                 ParamBounds aux_bounds = {});

struct AlignSettings {
  int budget = 20000;
  int max_candidates = 8;  // K
  int repeats = 10;
  double sigma = 0.2;                  // mixture position stddev, m
  double z_offset_stddev = 0.5;        // p_z ~ N(0, stddev^2)
  std::vector<double> scales = {0.5, 0.75, 1.0};
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Thrown when the pairwise-distance rejection budget is exhausted.
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Draw one scene: object positions i.i.d. from the mixture with rejection
/// until all pairwise distances >= d_th (max 1000 attempts), per-segment
/// roll ~ U[-pi, pi), z offset ~ N(0, sigma_z^2), scale uniform over the
/// configured set, aux uniform within bounds. Positions are projected onto
/// the ground plane and follow the sampled transform (scale about
/// `scale_anchor`, then the z offset) so objects land where the aligned
/// trajectory flies. Deterministic given `seed`.
SceneParams sample_scene(const PlacementDistribution& dist,
                         const SceneTemplate& tmpl, const Vec3& scale_anchor,
                         double d_th, std::uint64_t seed,
                         const AlignSettings& settings);

struct Candidate {
  SceneParams params;
  double mean_reward = 0.0;
  int n_rollouts = 0;
};

struct CandidateSet {
  std::vector<Candidate> candidates;
};

struct EvalResult {
  double mean_reward = 0.0;
  bool diverged = false;
};

/// Replay the aligned tool poses through the environment `repeats` times
/// with per-repeat derived seeds; returns the mean episode goal reward.
/// The replay horizon is poses.size()-1. A diverged simulation scores 0
/// and is flagged.
EvalResult evaluate_candidate(const EnvConfig& config, const SceneParams& params,
                              const std::vector<ToolPose>& poses, int repeats,
                              std::uint64_t seed);

/// Sample up to `budget` scenes, keep the first K (by seed order) whose
/// mean replay reward is positive, and return them sorted by descending
/// reward. Deterministic for a fixed seed, independent of thread count.
CandidateSet align(const ToolTrajectory& traj, const EnvConfig& env_config,
                   const AlignSettings& settings,
                   const ParamBounds& aux_bounds = {},
                   double reference_blend = 0.5);

/// Candidate-set artifact file, consumed by the trajectory-optimization
/// stage. Delimited text, one block per candidate.
void save_candidates(const CandidateSet& set, const std::string& path);
CandidateSet load_candidates(const std::string& path);

}  // namespace toolmimic
