#include "toolmimic/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <stdexcept>

#include "toolmimic/io.hpp"
#include "toolmimic/rng.hpp"

namespace toolmimic {

double min_object_distance(const ToolTrajectory& traj, double reference_blend) {
  traj.validate();
  const int n = traj.size();
  double d_min = std::numeric_limits<double>::infinity();
  double d_max = 0.0;
  bool any = false;
  for (int i = 0; i < n; ++i) {
    const Vec3 a = traj.reference_point(i, reference_blend);
    for (int j = i + 1; j < n; ++j) {
      const double d = (a - traj.reference_point(j, reference_blend)).norm();
      if (d <= 0.0) continue;
      any = true;
      d_min = std::min(d_min, d);
      d_max = std::max(d_max, d);
    }
  }
  if (!any) {
    throw std::invalid_argument(
        "degenerate trajectory: all reference points identical");
  }
  return 0.1 * (d_max - d_min);
}

void PlacementDistribution::validate() const {
  if (means.empty()) {
    throw std::invalid_argument("placement distribution has no components");
  }
  if (weights.size() != means.size()) {
    throw std::invalid_argument("weight count != component count");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("mixture weights must sum to 1");
  }
  const Eigen::LLT<Mat3> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("covariance is not positive definite");
  }
}

Vec3 PlacementDistribution::sample(Rng& rng) const {
  const double u = rng.uniform();
  std::size_t comp = means.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) {
      comp = i;
      break;
    }
  }
  const Mat3 chol = Eigen::LLT<Mat3>(covariance).matrixL();
  const Vec3 z(rng.normal(), rng.normal(), rng.normal());
  return means[comp] + chol * z;
}

PlacementDistribution placement_distribution(const KeypointSet& keypoints,
                                             double sigma,
                                             std::vector<double> weights) {
  PlacementDistribution dist;
  for (const Keypoint& k : keypoints.points) dist.means.push_back(k.position);
  dist.covariance = Mat3::Identity() * sigma * sigma;
  if (weights.empty()) {
    weights.assign(dist.means.size(), 1.0 / dist.means.size());
  }
  dist.weights = std::move(weights);
  dist.validate();
  return dist;
}

SceneTemplate scene_template_for(EnvKind kind, const KeypointSet& keypoints,
                                 ParamBounds aux_bounds) {
  aux_bounds.validate();
  SceneTemplate tmpl;
  tmpl.roll_segments = keypoints.segment_count();
  tmpl.aux_bounds = std::move(aux_bounds);
  switch (kind) {
    case EnvKind::kSpade:
      tmpl.objects = {"deposit", "goal_box"};
      tmpl.yaw_objects = {"deposit", "goal_box"};
      break;
    case EnvKind::kHammer:
      tmpl.objects = {"nail"};
      break;
    case EnvKind::kScythe:
      tmpl.objects = {"grass_patch"};
      tmpl.yaw_objects = {"grass_patch"};
      break;
  }
  return tmpl;
}

SceneParams sample_scene(const PlacementDistribution& dist,
                         const SceneTemplate& tmpl, const Vec3& scale_anchor,
                         double d_th, std::uint64_t seed,
                         const AlignSettings& settings) {
  dist.validate();
  Rng rng(seed);
  SceneParams params;

  // alignment transform
  const std::size_t scale_idx =
      static_cast<std::size_t>(rng.uniform_int(
          0, static_cast<int>(settings.scales.size()) - 1));
  params.transform.scale = settings.scales[scale_idx];
  params.transform.z_offset = rng.normal(0.0, settings.z_offset_stddev);
  params.transform.roll_per_segment.resize(tmpl.roll_segments);
  for (double& roll : params.transform.roll_per_segment) {
    roll = rng.uniform(-kPi, kPi);
  }

  // object positions: mixture draws rejected until pairwise distances pass,
  // expressed in the aligned trajectory's space and pinned to the ground
  auto aligned = [&](const Vec3& p) {
    Vec3 q = scale_anchor + params.transform.scale * (p - scale_anchor);
    q.z() = 0.0;
    return q;
  };
  const int n_obj = static_cast<int>(tmpl.objects.size());
  std::vector<Vec3> positions(n_obj);
  bool accepted = false;
  for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
    for (int i = 0; i < n_obj; ++i) positions[i] = aligned(dist.sample(rng));
    accepted = true;
    for (int i = 0; i < n_obj && accepted; ++i) {
      for (int j = i + 1; j < n_obj; ++j) {
        if ((positions[i] - positions[j]).norm() < d_th) {
          accepted = false;
          break;
        }
      }
    }
  }
  if (!accepted) {
    throw SamplingError("pairwise-distance rejection budget exhausted");
  }
  for (int i = 0; i < n_obj; ++i) {
    params.object_positions[tmpl.objects[i]] = positions[i];
  }
  for (const std::string& name : tmpl.yaw_objects) {
    params.object_yaws[name] = rng.uniform(-kPi, kPi);
  }
  for (const auto& [name, ab] : tmpl.aux_bounds.bounds) {
    params.aux[name] = rng.uniform(ab.first, ab.second);
  }
  return params;
}

EvalResult evaluate_candidate(const EnvConfig& config,
                              const SceneParams& params,
                              const std::vector<ToolPose>& poses, int repeats,
                              std::uint64_t seed) {
  if (poses.size() < 2) {
    throw std::invalid_argument("need at least 2 poses to replay");
  }
  EvalResult result;
  double total = 0.0;
  for (int rep = 0; rep < repeats; ++rep) {
    EnvConfig cfg = config;
    cfg.seed = derive_seed(seed, 0xe7a1, static_cast<std::uint64_t>(rep));
    cfg.horizon = static_cast<int>(poses.size()) - 1;
    Environment env(cfg, params);
    env.reset(poses[0]);
    double episode = 0.0;
    bool diverged = false;
    for (std::size_t t = 1; t < poses.size(); ++t) {
      try {
        episode += env.step_tool(poses[t]).sparse_reward;
      } catch (const std::runtime_error&) {
        diverged = true;
        break;
      }
    }
    if (diverged) {
      result.diverged = true;
      episode = 0.0;
    }
    total += episode;
  }
  result.mean_reward = result.diverged ? 0.0 : total / repeats;
  return result;
}

CandidateSet align(const ToolTrajectory& traj, const EnvConfig& env_config,
                   const AlignSettings& settings, const ParamBounds& aux_bounds,
                   double reference_blend) {
  if (settings.max_candidates < 1) {
    throw std::invalid_argument("K must be >= 1");
  }
  CandidateSet set;
  if (settings.budget < 1) return set;

  const KeypointSet keypoints = extract_keypoints(traj, 0.05, reference_blend);
  const double d_th = min_object_distance(traj, reference_blend);
  const PlacementDistribution dist =
      placement_distribution(keypoints, settings.sigma);
  const SceneTemplate tmpl =
      scene_template_for(env_config.kind, keypoints, aux_bounds);
  const Vec3 anchor = traj.reference_point(0, reference_blend);

  // Each draw is self-contained, so a chunk can be evaluated on worker
  // threads and merged by sample index; acceptance order stays the seed
  // order regardless of thread count.
  auto evaluate_one = [&](int j) -> Candidate {
    Candidate cand;
    cand.n_rollouts = settings.repeats;
    try {
      cand.params = sample_scene(dist, tmpl, anchor, d_th,
                                 derive_seed(settings.seed, 0x5ce11e5a,
                                             static_cast<std::uint64_t>(j)),
                                 settings);
    } catch (const SamplingError&) {
      cand.mean_reward = 0.0;
      return cand;
    }
    const std::vector<ToolPose> poses =
        apply_alignment(traj, cand.params.transform, keypoints, reference_blend);
    const EvalResult eval = evaluate_candidate(
        env_config, cand.params, poses, settings.repeats,
        derive_seed(settings.seed, 0xe0110a7, static_cast<std::uint64_t>(j)));
    cand.mean_reward = eval.mean_reward;
    return cand;
  };

  const int threads = std::max(1, settings.threads);
  for (int start = 0; start < settings.budget &&
                      static_cast<int>(set.candidates.size()) <
                          settings.max_candidates;
       start += threads) {
    const int end = std::min(settings.budget, start + threads);
    std::vector<Candidate> chunk(end - start);
    if (threads == 1) {
      chunk[0] = evaluate_one(start);
    } else {
      std::vector<std::future<Candidate>> futures;
      for (int j = start; j < end; ++j) {
        futures.push_back(
            std::async(std::launch::async, [&, j] { return evaluate_one(j); }));
      }
      for (int j = start; j < end; ++j) chunk[j - start] = futures[j - start].get();
    }
    for (Candidate& cand : chunk) {
      if (cand.mean_reward > 0.0 &&
          static_cast<int>(set.candidates.size()) < settings.max_candidates) {
        set.candidates.push_back(std::move(cand));
      }
    }
  }

  std::stable_sort(set.candidates.begin(), set.candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.mean_reward > b.mean_reward;
                   });
  return set;
}

void save_candidates(const CandidateSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# aligned scene candidates\n";
  for (const Candidate& c : set.candidates) {
    out << "candidate reward " << format_double(c.mean_reward) << " rollouts "
        << c.n_rollouts << " scale " << format_double(c.params.transform.scale)
        << " pz " << format_double(c.params.transform.z_offset) << " rolls "
        << c.params.transform.roll_per_segment.size();
    for (double roll : c.params.transform.roll_per_segment) {
      out << ' ' << format_double(roll);
    }
    out << "\n";
    for (const auto& [name, pos] : c.params.object_positions) {
      const auto yaw_it = c.params.object_yaws.find(name);
      const double yaw =
          yaw_it == c.params.object_yaws.end() ? 0.0 : yaw_it->second;
      out << "object " << name << ' '
          << format_doubles({pos.x(), pos.y(), pos.z(), yaw}) << "\n";
    }
    for (const auto& [name, value] : c.params.aux) {
      out << "aux " << name << ' ' << format_double(value) << "\n";
    }
    out << "end\n";
  }
}

CandidateSet load_candidates(const std::string& path) {
  TextFile file(path);
  CandidateSet set;
  Candidate current;
  bool in_candidate = false;
  while (file.next_line()) {
    LineReader r = file.reader();
    const std::string kind = r.next_token();
    if (kind == "candidate") {
      if (in_candidate) r.fail("missing 'end' before next candidate");
      current = Candidate{};
      in_candidate = true;
      r.expect("reward");
      current.mean_reward = r.next_double();
      r.expect("rollouts");
      current.n_rollouts = static_cast<int>(r.next_int());
      r.expect("scale");
      current.params.transform.scale = r.next_double();
      r.expect("pz");
      current.params.transform.z_offset = r.next_double();
      r.expect("rolls");
      const auto n = r.next_int();
      current.params.transform.roll_per_segment.resize(n);
      for (auto& roll : current.params.transform.roll_per_segment) {
        roll = r.next_double();
      }
    } else if (kind == "object") {
      if (!in_candidate) r.fail("object record outside candidate block");
      const std::string name = r.next_token();
      Vec3 pos;
      pos.x() = r.next_double();
      pos.y() = r.next_double();
      pos.z() = r.next_double();
      const double yaw = r.next_double();
      current.params.object_positions[name] = pos;
      current.params.object_yaws[name] = yaw;
    } else if (kind == "aux") {
      if (!in_candidate) r.fail("aux record outside candidate block");
      const std::string name = r.next_token();
      current.params.aux[name] = r.next_double();
    } else if (kind == "end") {
      if (!in_candidate) r.fail("stray 'end'");
      set.candidates.push_back(current);
      in_candidate = false;
    } else {
      r.fail("unknown record '" + kind + "'");
    }
  }
  if (in_candidate) {
    throw std::runtime_error(path + ": unterminated candidate block");
  }
  return set;
}

}  // namespace toolmimic
