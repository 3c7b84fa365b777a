#include "toolmimic/trajopt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <stdexcept>

#include "toolmimic/io.hpp"
#include "toolmimic/rng.hpp"

namespace toolmimic {

void TrackingProblem::validate() const {
  chain.validate();
  if (targets.size() < 2) {
    throw std::invalid_argument("tracking problem needs at least 2 targets");
  }
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  if (weights.velocity < 0.0 || weights.barrier < 0.0 ||
      weights.orientation < 0.0) {
    throw std::invalid_argument("weights must be nonnegative");
  }
  if (q0.size() != 0 && q0.size() != chain.dof()) {
    throw std::invalid_argument("q0 dimension mismatch");
  }
}

namespace {

/// d(theta^2)/dd for theta = 2*acos(|d|); series expansion near |d| = 1.
double geodesic_sq_derivative(double d) {
  const double s = std::abs(d);
  const double sign = d >= 0.0 ? 1.0 : -1.0;
  if (s >= 1.0) return -8.0 * sign;
  const double one_minus = 1.0 - s * s;
  if (one_minus < 1e-10) {
    // theta/sqrt(1-d^2) -> 2 as |d| -> 1
    return -8.0 * sign;
  }
  const double theta = 2.0 * std::acos(s);
  return -4.0 * theta * sign / std::sqrt(one_minus);
}

}  // namespace

StageCost stage_cost(const KinematicChain& chain, const BaseMount& base,
                     const VecX& q, const VecX& v, const ToolPose& target,
                     const TrackingWeights& weights) {
  const int n = chain.dof();
  StageCost out;
  out.grad_q = VecX::Zero(n);
  out.grad_v = VecX::Zero(n);
  out.hess_qq = MatX::Zero(n, n);
  out.hess_vv = MatX::Zero(n, n);

  const ToolPose fk = forward_kinematics(chain, base, q);
  const MatX jac = tool_jacobian(chain, base, q);
  const auto jac_pos = jac.topRows<3>();
  const auto jac_rot = jac.bottomRows<3>();

  // position: squared distance, exact gradient, Gauss-Newton curvature
  const Vec3 residual = fk.position - target.position;
  out.value += residual.squaredNorm();
  out.grad_q += 2.0 * jac_pos.transpose() * residual;
  out.hess_qq += 2.0 * jac_pos.transpose() * jac_pos;

  // orientation: w_R * geodesic(fk, target)^2. The gradient is exact via
  // the quaternion chain rule; curvature approximated by J_w^T J_w.
  if (weights.orientation > 0.0) {
    const Quat qf = fk.orientation.normalized();
    const double d = qf.coeffs().dot(target.orientation.coeffs());
    const double clamped = std::clamp(std::abs(d), -1.0, 1.0);
    const double theta = 2.0 * std::acos(std::min(clamped, 1.0));
    out.value += weights.orientation * theta * theta;
    const double dcost_dd = weights.orientation * geodesic_sq_derivative(d);
    for (int i = 0; i < n; ++i) {
      const Vec3 w = jac_rot.col(i);
      const Quat omega(0.0, w.x(), w.y(), w.z());
      const Quat dq = omega * qf;  // dq/dtheta_i = 0.5 * (0,w) * q
      const double dd =
          0.5 * dq.coeffs().dot(target.orientation.coeffs());
      out.grad_q[i] += dcost_dd * dd;
    }
    out.hess_qq +=
        2.0 * weights.orientation * jac_rot.transpose() * jac_rot;
  }

  // joint-limit barrier
  if (weights.barrier > 0.0) {
    const BarrierValue barrier = joint_limit_barrier(chain, q);
    out.value += weights.barrier * barrier.value;
    out.grad_q += weights.barrier * barrier.gradient;
    out.hess_qq += weights.barrier * barrier.hessian_diag.asDiagonal();
  }

  // velocity regularization
  out.value += weights.velocity * v.squaredNorm();
  out.grad_v = 2.0 * weights.velocity * v;
  out.hess_vv = 2.0 * weights.velocity * MatX::Identity(n, n);
  return out;
}

namespace {

double rollout_cost(const TrackingProblem& problem, const BaseMount& base,
                    const std::vector<VecX>& velocities,
                    std::vector<VecX>* states) {
  const int horizon = static_cast<int>(problem.targets.size()) - 1;
  const int n = problem.chain.dof();
  const VecX zero = VecX::Zero(n);
  VecX q = problem.q0.size() ? problem.q0 : problem.chain.mid_configuration();
  if (states) {
    states->clear();
    states->push_back(q);
  }
  double cost = 0.0;
  for (int t = 0; t <= horizon; ++t) {
    const VecX& v = t < horizon ? velocities[t] : zero;
    cost += stage_cost(problem.chain, base, q, v, problem.targets[t],
                       problem.weights)
                .value;
    if (t < horizon) {
      q = q + velocities[t] * problem.dt;
      if (states) states->push_back(q);
    }
  }
  return cost;
}

}  // namespace

VelocitySolution solve_velocities(const TrackingProblem& problem,
                                  const BaseMount& base) {
  problem.validate();
  const int horizon = static_cast<int>(problem.targets.size()) - 1;
  const int n = problem.chain.dof();
  const double dt = problem.dt;
  const VecX q_start =
      problem.q0.size() ? problem.q0 : problem.chain.mid_configuration();

  std::vector<VecX> u(horizon, VecX::Zero(n));
  std::vector<VecX> x(horizon + 1, q_start);
  double cost = rollout_cost(problem, base, u, &x);
  if (!std::isfinite(cost)) {
    throw std::runtime_error("tracking cost non-finite at initialization");
  }

  VelocitySolution sol;
  sol.cost_trace.push_back(cost);

  double mu = 1e-6;
  const double mu_min = 1e-10;
  const double mu_max = 1e10;

  std::vector<VecX> feedforward(horizon, VecX::Zero(n));
  std::vector<MatX> feedback(horizon, MatX::Zero(n, n));

  int iter = 0;
  for (; iter < problem.max_iterations; ++iter) {
    // derivatives along the current trajectory
    std::vector<StageCost> stages(horizon + 1);
    const VecX zero = VecX::Zero(n);
    for (int t = 0; t <= horizon; ++t) {
      stages[t] = stage_cost(problem.chain, base, x[t],
                             t < horizon ? u[t] : zero, problem.targets[t],
                             problem.weights);
    }

    // backward pass; f_x = I, f_u = dt*I
    bool backward_ok = false;
    while (!backward_ok && mu <= mu_max) {
      backward_ok = true;
      VecX value_x = stages[horizon].grad_q;
      MatX value_xx = stages[horizon].hess_qq;
      for (int t = horizon - 1; t >= 0; --t) {
        const VecX q_x = stages[t].grad_q + value_x;
        const VecX q_u = stages[t].grad_v + dt * value_x;
        const MatX q_xx = stages[t].hess_qq + value_xx;
        MatX q_uu = stages[t].hess_vv + dt * dt * value_xx;
        q_uu.diagonal().array() += mu;
        const MatX q_ux = dt * value_xx;

        const Eigen::LLT<MatX> llt(q_uu);
        if (llt.info() != Eigen::Success) {
          backward_ok = false;
          mu *= 10.0;
          break;
        }
        feedforward[t] = -llt.solve(q_u);
        feedback[t] = -llt.solve(q_ux);

        const VecX& k = feedforward[t];
        const MatX& big_k = feedback[t];
        value_x = q_x + big_k.transpose() * (q_uu * k) +
                  big_k.transpose() * q_u + q_ux.transpose() * k;
        value_xx = q_xx + big_k.transpose() * q_uu * big_k +
                   big_k.transpose() * q_ux + q_ux.transpose() * big_k;
        value_xx = 0.5 * (value_xx + value_xx.transpose());
      }
    }
    if (!backward_ok) break;  // regularization saturated

    // forward pass with backtracking line search
    bool accepted = false;
    for (double alpha = 1.0; alpha >= 1.0 / 1024.0; alpha *= 0.5) {
      std::vector<VecX> u_new(horizon);
      std::vector<VecX> x_new(horizon + 1, q_start);
      for (int t = 0; t < horizon; ++t) {
        u_new[t] = u[t] + alpha * feedforward[t] + feedback[t] * (x_new[t] - x[t]);
        x_new[t + 1] = x_new[t] + u_new[t] * dt;
      }
      const double new_cost = rollout_cost(problem, base, u_new, nullptr);
      if (!std::isfinite(new_cost)) {
        throw std::runtime_error("tracking cost non-finite at iteration " +
                                 std::to_string(iter));
      }
      if (new_cost < cost) {
        const double decrease = (cost - new_cost) / std::max(1.0, std::abs(cost));
        u = std::move(u_new);
        rollout_cost(problem, base, u, &x);
        cost = new_cost;
        sol.cost_trace.push_back(cost);
        accepted = true;
        mu = std::max(mu_min, mu * 0.5);
        if (decrease < problem.cost_tolerance) iter = problem.max_iterations;
        break;
      }
    }
    if (!accepted) {
      mu *= 10.0;
      if (mu > mu_max) break;
    }
  }

  sol.velocities = std::move(u);
  sol.states = std::move(x);
  sol.cost = cost;
  sol.iterations = iter;
  return sol;
}

namespace {

TrackingErrorStats tracking_errors(const TrackingProblem& problem,
                                   const BaseMount& base,
                                   const std::vector<VecX>& states) {
  TrackingErrorStats stats;
  double pos_sum = 0.0, rot_sum = 0.0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const ToolPose fk = forward_kinematics(problem.chain, base, states[t]);
    const double pos_err = (fk.position - problem.targets[t].position).norm();
    const double rot_err = quat_geodesic_distance(
        fk.orientation.normalized(), problem.targets[t].orientation);
    pos_sum += pos_err;
    rot_sum += rot_err;
    stats.max_position = std::max(stats.max_position, pos_err);
    stats.max_orientation = std::max(stats.max_orientation, rot_err);
  }
  stats.mean_position = pos_sum / states.size();
  stats.mean_orientation = rot_sum / states.size();
  return stats;
}

std::vector<double> grid_points(double lo, double hi, int count) {
  std::vector<double> pts;
  if (count <= 1 || hi <= lo) {
    pts.push_back(0.5 * (lo + hi));
    return pts;
  }
  for (int i = 0; i < count; ++i) {
    pts.push_back(lo + (hi - lo) * i / (count - 1));
  }
  return pts;
}

std::uint64_t cell_seed(double x, double y, double yaw) {
  auto bits = [](double v) {
    std::uint64_t b;
    static_assert(sizeof(b) == sizeof(v));
    std::memcpy(&b, &v, sizeof(b));
    return b;
  };
  return splitmix64(bits(x) ^ splitmix64(bits(y) ^ splitmix64(bits(yaw))));
}

struct BaseCandidateResult {
  BaseMount base;
  VelocitySolution solution;
  double cost = std::numeric_limits<double>::infinity();
  bool ok = false;
};

}  // namespace

TrackingSolution solve_with_base(const TrackingProblem& problem,
                                 const BaseSearchSettings& settings) {
  problem.validate();
  const BaseSearchRegion& region = problem.base_region;

  const std::vector<double> xs = grid_points(region.x_lo, region.x_hi,
                                             settings.grid_x);
  const std::vector<double> ys = grid_points(region.y_lo, region.y_hi,
                                             settings.grid_y);
  const std::vector<double> yaws = grid_points(region.yaw_lo, region.yaw_hi,
                                               settings.grid_yaw);

  struct Cell {
    double x, y, yaw;
  };
  std::vector<Cell> cells;
  for (double x : xs) {
    for (double y : ys) {
      for (double yaw : yaws) cells.push_back({x, y, yaw});
    }
  }

  auto try_solve = [&](const BaseMount& base) -> BaseCandidateResult {
    BaseCandidateResult r;
    r.base = base;
    try {
      r.solution = solve_velocities(problem, base);
      r.cost = r.solution.cost;
      r.ok = true;
    } catch (const std::runtime_error&) {
      r.ok = false;
    }
    return r;
  };

  const double sigma_x0 =
      xs.size() > 1 ? (region.x_hi - region.x_lo) / (xs.size() - 1)
                    : 0.25 * (region.x_hi - region.x_lo);
  const double sigma_y0 =
      ys.size() > 1 ? (region.y_hi - region.y_lo) / (ys.size() - 1)
                    : 0.25 * (region.y_hi - region.y_lo);
  const double sigma_yaw0 =
      yaws.size() > 1 ? (region.yaw_hi - region.yaw_lo) / (yaws.size() - 1)
                      : 0.25 * (region.yaw_hi - region.yaw_lo);

  // Per-cell search: the grid point itself, then cross-entropy refinement
  // seeded from the cell coordinates so results depend only on the cell,
  // not on the surrounding grid.
  auto search_cell = [&](const Cell& cell) -> BaseCandidateResult {
    BaseCandidateResult best = try_solve(
        {cell.x, cell.y, cell.yaw, region.height});
    Rng rng(cell_seed(cell.x, cell.y, cell.yaw));
    Vec3 mean(cell.x, cell.y, cell.yaw);
    Vec3 sigma(sigma_x0, sigma_y0, sigma_yaw0);
    if (sigma.norm() < 1e-12 || settings.cem_population < 1) return best;
    const int elites = std::max(1, std::min(settings.cem_elites,
                                            settings.cem_population));
    for (int it = 0; it < settings.cem_iterations; ++it) {
      std::vector<std::pair<double, Vec3>> scored;
      for (int p = 0; p < settings.cem_population; ++p) {
        Vec3 cand(
            std::clamp(rng.normal(mean.x(), sigma.x()), region.x_lo, region.x_hi),
            std::clamp(rng.normal(mean.y(), sigma.y()), region.y_lo, region.y_hi),
            std::clamp(rng.normal(mean.z(), sigma.z()), region.yaw_lo,
                       region.yaw_hi));
        BaseCandidateResult r =
            try_solve({cand.x(), cand.y(), cand.z(), region.height});
        if (r.ok && r.cost < best.cost) best = std::move(r);
        scored.push_back({r.ok ? r.cost : std::numeric_limits<double>::infinity(),
                          cand});
      }
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& a, const auto& b) {
                         return a.first < b.first;
                       });
      Vec3 new_mean = Vec3::Zero();
      for (int e = 0; e < elites; ++e) new_mean += scored[e].second;
      new_mean /= elites;
      Vec3 var = Vec3::Zero();
      for (int e = 0; e < elites; ++e) {
        var += (scored[e].second - new_mean).cwiseAbs2();
      }
      mean = new_mean;
      sigma = (var / elites).cwiseSqrt().cwiseMax(1e-4);
    }
    return best;
  };

  std::vector<BaseCandidateResult> results(cells.size());
  const int threads = std::max(1, settings.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      results[i] = search_cell(cells[i]);
    }
  } else {
    for (std::size_t start = 0; start < cells.size();
         start += static_cast<std::size_t>(threads)) {
      const std::size_t end =
          std::min(cells.size(), start + static_cast<std::size_t>(threads));
      std::vector<std::future<BaseCandidateResult>> futures;
      for (std::size_t i = start; i < end; ++i) {
        futures.push_back(std::async(std::launch::async,
                                     [&, i] { return search_cell(cells[i]); }));
      }
      for (std::size_t i = start; i < end; ++i) {
        results[i] = futures[i - start].get();
      }
    }
  }

  const BaseCandidateResult* best = nullptr;
  for (const BaseCandidateResult& r : results) {
    if (!r.ok) continue;
    if (!best || r.cost < best->cost) best = &r;
  }
  if (!best) {
    throw std::runtime_error("base search failed: no candidate solved");
  }

  TrackingSolution sol;
  sol.base = best->base;
  sol.velocities = best->solution.velocities;
  sol.states = best->solution.states;
  sol.cost = best->solution.cost;
  sol.cost_trace = best->solution.cost_trace;
  sol.error = tracking_errors(problem, sol.base, sol.states);
  return sol;
}

VecX assemble_state(const ToolPose& pose, const VecX& q, int step,
                    int horizon) {
  VecX s(7 + q.size() + 1);
  s[0] = pose.position.x();
  s[1] = pose.position.y();
  s[2] = pose.position.z();
  s[3] = pose.orientation.w();
  s[4] = pose.orientation.x();
  s[5] = pose.orientation.y();
  s[6] = pose.orientation.z();
  s.segment(7, q.size()) = q;
  s[7 + q.size()] = static_cast<double>(step) / std::max(1, horizon);
  return s;
}

DemoRollout rollout_demo(const KinematicChain& chain,
                         const TrackingSolution& solution, Environment& env) {
  const int horizon = static_cast<int>(solution.velocities.size());
  DemoRollout out;
  ToolPose pose = forward_kinematics(chain, solution.base, solution.states[0]);
  env.reset(pose);
  for (int t = 0; t < horizon && !env.state().done; ++t) {
    out.pairs.push_back(
        {assemble_state(pose, solution.states[t], t, env.config().horizon),
         solution.velocities[t]});
    pose = forward_kinematics(chain, solution.base, solution.states[t + 1]);
    out.goal_reward += env.step_tool(pose).sparse_reward;
  }
  out.trace = env.trace();
  return out;
}

void save_solution(const TrackingSolution& solution, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int n =
      solution.states.empty() ? 0 : static_cast<int>(solution.states[0].size());
  out << "# tracking solution\n";
  out << "base " << format_doubles({solution.base.x, solution.base.y,
                                    solution.base.yaw, solution.base.height})
      << "\n";
  out << "dof " << n << " steps " << solution.states.size() << "\n";
  out << "cost " << format_double(solution.cost) << "\n";
  out << "cost_trace " << solution.cost_trace.size();
  for (double c : solution.cost_trace) out << ' ' << format_double(c);
  out << "\n";
  out << "error "
      << format_doubles({solution.error.mean_position,
                         solution.error.max_position,
                         solution.error.mean_orientation,
                         solution.error.max_orientation})
      << "\n";
  for (std::size_t t = 0; t < solution.states.size(); ++t) {
    out << "step " << t;
    for (int i = 0; i < n; ++i) {
      out << ' ' << format_double(solution.states[t][i]);
    }
    for (int i = 0; i < n; ++i) {
      const double v =
          t < solution.velocities.size() ? solution.velocities[t][i] : 0.0;
      out << ' ' << format_double(v);
    }
    out << "\n";
  }
}

TrackingSolution load_solution(const std::string& path) {
  TextFile file(path);
  TrackingSolution sol;
  int dof = 0;
  std::size_t steps = 0;
  while (file.next_line()) {
    LineReader r = file.reader();
    const std::string kind = r.next_token();
    if (kind == "base") {
      sol.base.x = r.next_double();
      sol.base.y = r.next_double();
      sol.base.yaw = r.next_double();
      sol.base.height = r.next_double();
    } else if (kind == "dof") {
      dof = static_cast<int>(r.next_int());
      r.expect("steps");
      steps = static_cast<std::size_t>(r.next_int());
    } else if (kind == "cost") {
      sol.cost = r.next_double();
    } else if (kind == "cost_trace") {
      const auto count = r.next_int();
      sol.cost_trace.resize(count);
      for (auto& c : sol.cost_trace) c = r.next_double();
    } else if (kind == "error") {
      sol.error.mean_position = r.next_double();
      sol.error.max_position = r.next_double();
      sol.error.mean_orientation = r.next_double();
      sol.error.max_orientation = r.next_double();
    } else if (kind == "step") {
      const auto t = r.next_int();
      VecX q(dof), v(dof);
      for (int i = 0; i < dof; ++i) q[i] = r.next_double();
      for (int i = 0; i < dof; ++i) v[i] = r.next_double();
      if (static_cast<std::size_t>(t) != sol.states.size()) {
        r.fail("out-of-order step record");
      }
      sol.states.push_back(q);
      if (sol.states.size() < steps) sol.velocities.push_back(v);
    } else {
      r.fail("unknown record '" + kind + "'");
    }
  }
  return sol;
}

void save_demo_pairs(const std::vector<DemoPair>& pairs,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int state_dim =
      pairs.empty() ? 0 : static_cast<int>(pairs[0].state.size());
  const int action_dim =
      pairs.empty() ? 0 : static_cast<int>(pairs[0].action.size());
  out << "# behavior-cloning pairs\n";
  out << "pairs " << pairs.size() << " state_dim " << state_dim
      << " action_dim " << action_dim << "\n";
  for (const DemoPair& p : pairs) {
    for (int i = 0; i < state_dim; ++i) {
      out << (i ? " " : "") << format_double(p.state[i]);
    }
    for (int i = 0; i < action_dim; ++i) {
      out << ' ' << format_double(p.action[i]);
    }
    out << "\n";
  }
}

std::vector<DemoPair> load_demo_pairs(const std::string& path) {
  TextFile file(path);
  if (!file.next_line()) throw std::runtime_error(path + ": empty pairs file");
  LineReader header = file.reader();
  header.expect("pairs");
  const auto count = header.next_int();
  header.expect("state_dim");
  const int state_dim = static_cast<int>(header.next_int());
  header.expect("action_dim");
  const int action_dim = static_cast<int>(header.next_int());
  std::vector<DemoPair> pairs;
  pairs.reserve(count);
  while (file.next_line()) {
    LineReader r = file.reader();
    DemoPair p;
    p.state.resize(state_dim);
    p.action.resize(action_dim);
    for (int i = 0; i < state_dim; ++i) p.state[i] = r.next_double();
    for (int i = 0; i < action_dim; ++i) p.action[i] = r.next_double();
    pairs.push_back(std::move(p));
  }
  if (static_cast<std::int64_t>(pairs.size()) != count) {
    throw std::runtime_error(path + ": pair count mismatch");
  }
  return pairs;
}

}  // namespace toolmimic
