#pragma once

#include <string>
#include <vector>

#include "toolmimic/geometry.hpp"
#include "toolmimic/kinematics.hpp"

namespace toolmimic {

/// One frame of an extracted tool trajectory: the 3D endpoints of the
/// tool's line segment.
struct ToolFrame {
  Vec3 head;
  Vec3 tail;
};

/// Timed sequence of tool line-segment endpoints, as produced by the
/// upstream video-extraction stage. Immutable after load.
struct ToolTrajectory {
  double dt = 1.0 / 24.0;
  std::vector<ToolFrame> frames;

  int size() const { return static_cast<int>(frames.size()); }

  /// Tool reference point of a frame; the segment midpoint by default,
  /// configurable via `reference_blend` in [0,1] (0 = tail, 1 = head).
  Vec3 reference_point(int frame, double reference_blend = 0.5) const;

  /// Segment length at frame 0; treated as the rigid tool's length.
  double tool_length() const;

  void validate() const;
};

/// Trajectory file: `dt <seconds>` header line, then one record per frame:
/// `<index> <head x y z> <tail x y z>`. Parse errors name the line.
ToolTrajectory load_trajectory(const std::string& path);
void save_trajectory(const ToolTrajectory& traj, const std::string& path);

/// Per-frame speed of the reference point: central differences inside,
/// one-sided at the ends. Output length equals the frame count.
std::vector<double> tool_speeds(const ToolTrajectory& traj,
                                double reference_blend = 0.5);

enum class KeypointKind { kHighSpeed, kLowSpeed };

struct Keypoint {
  int frame = 0;
  KeypointKind kind = KeypointKind::kLowSpeed;
  Vec3 position = Vec3::Zero();  // reference point at that frame
};

/// Keypoints sorted by frame index; high- and low-speed sets are disjoint.
struct KeypointSet {
  std::vector<Keypoint> points;

  std::vector<int> frames() const;
  /// Number of inter-keypoint segments the trajectory is partitioned into:
  /// one more than the number of distinct keypoint frames (the stretches
  /// before the first and after the last keypoint count as segments).
  int segment_count() const;
  /// Segment index containing `frame`.
  int segment_of(int frame) const;
};

/// Frames in the top/bottom speed fraction (default 5%) become keypoint
/// candidates; runs of consecutive candidates merge to a single keypoint.
/// Requires at least 20 frames. Throws std::invalid_argument otherwise.
KeypointSet extract_keypoints(const ToolTrajectory& traj,
                              double fraction = 0.05,
                              double reference_blend = 0.5);

/// Spatial alignment of a trajectory: uniform scale about the frame-0
/// reference point, a z offset, and one roll angle about the tool's long
/// axis per inter-keypoint segment.
struct AlignmentTransform {
  double scale = 1.0;                 // one of {0.5, 0.75, 1}
  double z_offset = 0.0;              // m
  std::vector<double> roll_per_segment;  // rad, each in [-pi, pi)
};

/// Target tool poses for the aligned trajectory. Positions are scaled and
/// z-shifted reference points; orientations are minimal-rotation frames
/// along the segment direction (x axis = tool long axis, seeded with world
/// up at frame 0) composed with the containing segment's roll.
/// Throws if the roll count does not match keypoints.segment_count().
std::vector<ToolPose> apply_alignment(const ToolTrajectory& traj,
                                      const AlignmentTransform& transform,
                                      const KeypointSet& keypoints,
                                      double reference_blend = 0.5);

}  // namespace toolmimic
