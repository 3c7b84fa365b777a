#include "toolmimic/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "toolmimic/io.hpp"

namespace toolmimic {

Vec3 ToolTrajectory::reference_point(int frame, double reference_blend) const {
  const ToolFrame& f = frames.at(frame);
  return f.tail + reference_blend * (f.head - f.tail);
}

double ToolTrajectory::tool_length() const {
  return (frames.at(0).head - frames.at(0).tail).norm();
}

void ToolTrajectory::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("trajectory dt must be positive");
  if (frames.size() < 2) {
    throw std::invalid_argument("trajectory needs at least 2 frames");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].head.allFinite() || !frames[i].tail.allFinite()) {
      throw std::invalid_argument("trajectory frame " + std::to_string(i) +
                                  " has non-finite coordinates");
    }
    if ((frames[i].head - frames[i].tail).norm() <= 0.0) {
      throw std::invalid_argument("trajectory frame " + std::to_string(i) +
                                  " has zero-length tool segment");
    }
  }
}

ToolTrajectory load_trajectory(const std::string& path) {
  TextFile file(path);
  ToolTrajectory traj;
  bool have_dt = false;
  while (file.next_line()) {
    LineReader r = file.reader();
    if (!have_dt) {
      r.expect("dt");
      traj.dt = r.next_double();
      if (traj.dt <= 0.0) r.fail("dt must be positive");
      have_dt = true;
      continue;
    }
    const std::int64_t index = r.next_int();
    if (index != static_cast<std::int64_t>(traj.frames.size())) {
      r.fail("expected frame index " + std::to_string(traj.frames.size()) +
             ", got " + std::to_string(index));
    }
    ToolFrame f;
    f.head.x() = r.next_double();
    f.head.y() = r.next_double();
    f.head.z() = r.next_double();
    f.tail.x() = r.next_double();
    f.tail.y() = r.next_double();
    f.tail.z() = r.next_double();
    if ((f.head - f.tail).norm() <= 0.0) {
      r.fail("tool segment has zero length");
    }
    traj.frames.push_back(f);
  }
  if (!have_dt) throw std::runtime_error(path + ": missing dt header");
  if (traj.frames.size() < 2) {
    throw std::runtime_error(path + ": trajectory needs at least 2 frames");
  }
  traj.validate();
  return traj;
}

void save_trajectory(const ToolTrajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# tool trajectory: index head_xyz tail_xyz\n";
  out << "dt " << format_double(traj.dt) << "\n";
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const ToolFrame& f = traj.frames[i];
    out << i << ' '
        << format_doubles({f.head.x(), f.head.y(), f.head.z(), f.tail.x(),
                           f.tail.y(), f.tail.z()})
        << "\n";
  }
}

std::vector<double> tool_speeds(const ToolTrajectory& traj,
                                double reference_blend) {
  traj.validate();
  const int n = traj.size();
  std::vector<double> speeds(n);
  auto ref = [&](int i) { return traj.reference_point(i, reference_blend); };
  speeds[0] = (ref(1) - ref(0)).norm() / traj.dt;
  speeds[n - 1] = (ref(n - 1) - ref(n - 2)).norm() / traj.dt;
  for (int i = 1; i + 1 < n; ++i) {
    speeds[i] = (ref(i + 1) - ref(i - 1)).norm() / (2.0 * traj.dt);
  }
  return speeds;
}

std::vector<int> KeypointSet::frames() const {
  std::vector<int> out;
  out.reserve(points.size());
  for (const Keypoint& k : points) out.push_back(k.frame);
  return out;
}

int KeypointSet::segment_count() const {
  int distinct = 0;
  int prev = -1;
  for (const Keypoint& k : points) {
    if (k.frame != prev) ++distinct;
    prev = k.frame;
  }
  return distinct + 1;
}

int KeypointSet::segment_of(int frame) const {
  int seg = 0;
  int prev = -1;
  for (const Keypoint& k : points) {
    if (k.frame == prev) continue;
    if (frame >= k.frame) ++seg;
    prev = k.frame;
  }
  return seg;
}

namespace {

struct Run {
  int begin;  // inclusive
  int end;    // inclusive
};

std::vector<Run> runs_of(const std::vector<int>& sorted_frames) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < sorted_frames.size();) {
    std::size_t j = i;
    while (j + 1 < sorted_frames.size() &&
           sorted_frames[j + 1] == sorted_frames[j] + 1)
      ++j;
    runs.push_back({sorted_frames[i], sorted_frames[j]});
    i = j + 1;
  }
  return runs;
}

}  // namespace

KeypointSet extract_keypoints(const ToolTrajectory& traj, double fraction,
                              double reference_blend) {
  const int n = traj.size();
  if (n < 20) {
    throw std::invalid_argument(
        "keypoint extraction needs at least 20 frames, got " +
        std::to_string(n));
  }
  const std::vector<double> speeds = tool_speeds(traj, reference_blend);

  // Threshold = k-th order statistic from each end, k = floor(fraction*n),
  // at least 1. Ties are all included; runs merge below.
  const int k = std::max(1, static_cast<int>(std::floor(fraction * n)));
  std::vector<double> sorted = speeds;
  std::sort(sorted.begin(), sorted.end());
  const double low_threshold = sorted[k - 1];
  const double high_threshold = sorted[n - k];

  std::vector<int> high_frames;
  std::vector<int> low_frames;
  for (int i = 0; i < n; ++i) {
    if (speeds[i] >= high_threshold) high_frames.push_back(i);
    if (speeds[i] <= low_threshold) low_frames.push_back(i);
  }

  // Merge runs of consecutive candidates: a high run keeps its earliest
  // fastest frame, a low run keeps its latest slowest frame.
  std::vector<Keypoint> points;
  for (const Run& run : runs_of(high_frames)) {
    int best = run.begin;
    for (int i = run.begin + 1; i <= run.end; ++i) {
      if (speeds[i] > speeds[best]) best = i;
    }
    points.push_back({best, KeypointKind::kHighSpeed,
                      traj.reference_point(best, reference_blend)});
  }
  for (const Run& run : runs_of(low_frames)) {
    int best = run.begin;
    for (int i = run.begin + 1; i <= run.end; ++i) {
      if (speeds[i] <= speeds[best]) best = i;
    }
    const bool taken_as_high =
        std::any_of(points.begin(), points.end(),
                    [&](const Keypoint& p) { return p.frame == best; });
    if (!taken_as_high) {
      points.push_back({best, KeypointKind::kLowSpeed,
                        traj.reference_point(best, reference_blend)});
    }
  }
  std::sort(points.begin(), points.end(),
            [](const Keypoint& a, const Keypoint& b) { return a.frame < b.frame; });

  KeypointSet set;
  set.points = std::move(points);
  return set;
}

std::vector<ToolPose> apply_alignment(const ToolTrajectory& traj,
                                      const AlignmentTransform& transform,
                                      const KeypointSet& keypoints,
                                      double reference_blend) {
  traj.validate();
  const int expected = keypoints.segment_count();
  if (static_cast<int>(transform.roll_per_segment.size()) != expected) {
    throw std::invalid_argument(
        "alignment has " + std::to_string(transform.roll_per_segment.size()) +
        " roll angles, trajectory has " + std::to_string(expected) +
        " inter-keypoint segments");
  }

  const int n = traj.size();
  const Vec3 anchor = traj.reference_point(0, reference_blend);

  std::vector<Vec3> positions(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 r = traj.reference_point(i, reference_blend);
    positions[i] = anchor + transform.scale * (r - anchor);
    positions[i].z() += transform.z_offset;
  }

  // Orientation: x axis along the tool segment, remaining axes carried by
  // minimal rotation from the previous frame; frame 0 seeded with world up.
  std::vector<ToolPose> poses(n);
  Quat frame_rot;
  {
    const Vec3 u0 = (traj.frames[0].head - traj.frames[0].tail).normalized();
    Vec3 y0 = Vec3::UnitZ().cross(u0);
    if (y0.squaredNorm() < 1e-12) y0 = Vec3::UnitY().cross(u0);
    y0.normalize();
    const Vec3 z0 = u0.cross(y0);
    Mat3 rot;
    rot.col(0) = u0;
    rot.col(1) = y0;
    rot.col(2) = z0;
    frame_rot = Quat(rot).normalized();
  }

  Vec3 prev_dir = (traj.frames[0].head - traj.frames[0].tail).normalized();
  for (int i = 0; i < n; ++i) {
    const Vec3 dir = (traj.frames[i].head - traj.frames[i].tail).normalized();
    if (i > 0) {
      frame_rot = (minimal_rotation(prev_dir, dir) * frame_rot).normalized();
      prev_dir = dir;
    }
    const double roll = transform.roll_per_segment[keypoints.segment_of(i)];
    poses[i].position = positions[i];
    poses[i].orientation =
        (frame_rot * quat_from_axis_angle(Vec3::UnitX(), roll)).normalized();
  }
  return poses;
}

}  // namespace toolmimic
