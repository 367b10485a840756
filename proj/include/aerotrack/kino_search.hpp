#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aerotrack/common.hpp"
#include "aerotrack/grid_world.hpp"
#include "aerotrack/prediction.hpp"

namespace aerotrack {

struct KinoState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double t = 0.0;
};

struct MotionPrimitive {
  Vec3 u = Vec3::Zero();
  double tau = 0.0;
  KinoState start;
  KinoState end;
};

struct SearchWeights {
  double rho = 10.0;           ///< time weight of the energy-time cost
  double w_goal = 0.7;         ///< blend toward the predicted state
  double c_time = 1.0;         ///< multiplier on the OBVP duration in h
  double p_occ = -1.0;         ///< occlusion penalty; < 0 selects the default
  double tau = 0.3;            ///< primitive duration (s)
  double a_m = 3.0;            ///< per-axis control magnitude
  double v_m = 3.0;            ///< per-axis speed bound
  double lookahead = 1.0;      ///< x_tp is sampled this long after t_c
  double r_goal = 0.5;
  double v_goal_tol = 1.0;
  double v_bin = 0.5;
  double key_resolution = 0.0; ///< position binning; 0 uses the grid resolution
  int max_expansions = 30000;
  bool planar = false;         ///< freeze z (9 primitives instead of 27)
};

struct KinoPath {
  std::vector<MotionPrimitive> primitives;
  KinoState end_state;
  double total_cost = 0.0;
  int expansions = 0;
  bool reached_goal = false;
};

/// Double-integrator propagation under constant acceleration.
inline KinoState propagate(const KinoState& s, const Vec3& u, double tau) {
  return {s.p + s.v * tau + 0.5 * u * tau * tau, s.v + u * tau, s.t + tau};
}

inline double edge_cost(const Vec3& u, double tau, const SearchWeights& w) {
  return u.squaredNorm() * tau + w.rho * tau;
}

struct ObvpResult {
  double cost = 0.0;
  double duration = 0.0;
};

namespace detail {

struct ObvpTerms {
  double a, b, c;  // |dp|^2, (v0+v1).dp, |v0|^2 + v0.v1 + |v1|^2
};

inline ObvpTerms obvp_terms(const KinoState& x0, const KinoState& x1) {
  const Vec3 dp = x1.p - x0.p;
  return {dp.squaredNorm(), (x0.v + x1.v).dot(dp),
          x0.v.squaredNorm() + x0.v.dot(x1.v) + x1.v.squaredNorm()};
}

inline double obvp_objective(const ObvpTerms& k, double rho, double T) {
  return 12.0 * k.a / (T * T * T) - 12.0 * k.b / (T * T) + 4.0 * k.c / T + rho * T;
}

}  // namespace detail

/// Minimum over T of the energy-optimal control cost plus rho*T between two
/// (position, velocity) states. Stationary points come from the quartic
/// rho T^4 - 4c T^2 + 24b T - 36a = 0.
inline ObvpResult obvp_cost(const KinoState& x0, const KinoState& x1, double rho) {
  const auto k = detail::obvp_terms(x0, x1);
  // Coinciding states are joined by the zero-duration trajectory, even when
  // moving (the T -> 0+ limit of the cost diverges, but T = 0 is feasible).
  const double scale = 1.0 + k.a + k.c;
  if (k.a <= 1e-18 * scale && (x1.v - x0.v).squaredNorm() <= 1e-18 * scale) return {0.0, 0.0};

  ObvpResult best{std::numeric_limits<double>::infinity(), 0.0};
  auto consider = [&](double T) {
    if (!(T > 0.0) || !std::isfinite(T)) return;
    const double j = detail::obvp_objective(k, rho, T);
    if (j < best.cost) best = {j, T};
  };

  if (rho > 0.0) {
    Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
    companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
    // Monic: T^4 + 0 T^3 - (4c/rho) T^2 + (24b/rho) T - 36a/rho.
    companion(0, 3) = 36.0 * k.a / rho;
    companion(1, 3) = -24.0 * k.b / rho;
    companion(2, 3) = 4.0 * k.c / rho;
    companion(3, 3) = 0.0;
    Eigen::EigenSolver<Eigen::Matrix4d> es(companion, false);
    if (es.info() == Eigen::Success) {
      for (int i = 0; i < 4; ++i) {
        const std::complex<double> r = es.eigenvalues()[i];
        if (std::abs(r.imag()) > 1e-6 * std::max(1.0, std::abs(r.real())) || r.real() <= 0.0) continue;
        double T = r.real();
        for (int it = 0; it < 3; ++it) {  // Newton polish
          const double f = rho * T * T * T * T - 4 * k.c * T * T + 24 * k.b * T - 36 * k.a;
          const double df = 4 * rho * T * T * T - 8 * k.c * T + 24 * k.b;
          if (df == 0.0) break;
          const double next = T - f / df;
          if (!(next > 0.0)) break;
          T = next;
        }
        consider(T);
      }
    }
  }
  if (!std::isfinite(best.cost)) {
    for (int i = 1; i <= 20000; ++i) consider(i * 1e-3);
  }
  return best;
}

/// P_occ used when the weights leave it unset: ten times the 3 m
/// rest-to-rest OBVP cost.
inline double default_occlusion_penalty(double rho) {
  KinoState a, b;
  b.p = Vec3(3.0, 0.0, 0.0);
  return 10.0 * obvp_cost(a, b, rho).cost;
}

inline double effective_occlusion_penalty(const SearchWeights& w) {
  return w.p_occ < 0.0 ? default_occlusion_penalty(w.rho) : w.p_occ;
}

inline double occlusion_penalty(const KinoState& x, const Vec3& x_tp, const OccupancyGrid& grid,
                                const SearchWeights& w) {
  return line_of_sight(grid, x.p, x_tp) ? 0.0 : effective_occlusion_penalty(w);
}

/// Blend of the predicted state at t_c and at t_c + lookahead.
inline KinoState goal_state(const PredictedTrajectory& traj, double t_c, const SearchWeights& w) {
  const auto now = evaluate(traj, t_c);
  const auto ahead = evaluate(traj, std::min(t_c + w.lookahead, traj.tp));
  KinoState g;
  g.p = (1.0 - w.w_goal) * now.position + w.w_goal * ahead.position;
  g.v = (1.0 - w.w_goal) * now.velocity + w.w_goal * ahead.velocity;
  return g;
}

/// Dense collision test of a primitive at quarter-voxel spacing (endpoint
/// included, start excluded).
inline bool primitive_free(const KinoState& s, const Vec3& u, double tau, const OccupancyGrid& grid) {
  const double length = s.v.norm() * tau + 0.5 * u.norm() * tau * tau;
  const int n = std::max(1, static_cast<int>(std::ceil(length / (0.25 * grid.resolution()))));
  for (int i = 1; i <= n; ++i) {
    const double t = tau * i / n;
    if (is_occupied(grid, s.p + s.v * t + 0.5 * u * t * t)) return false;
  }
  return true;
}

namespace detail {

using NodeKey = std::array<int, 6>;

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const {
    std::size_t h = 1469598103934665603ull;
    for (int v : k) h = (h ^ static_cast<std::uint32_t>(v)) * 1099511628211ull;
    return h;
  }
};

struct SearchNode {
  KinoState state;
  int parent = -1;
  Vec3 u = Vec3::Zero();
  double g = 0.0;
  double f = 0.0;
  NodeKey key{};
  bool closed = false;
};

struct QueueEntry {
  double f, g;
  NodeKey key;
  int node;
};

// Min-heap on f, then larger g, then key.
struct QueueOrder {
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.g != b.g) return a.g < b.g;
    return a.key > b.key;
  }
};

inline std::vector<Vec3> control_set(const SearchWeights& w) {
  const std::array<double, 3> levels{-w.a_m, 0.0, w.a_m};
  std::vector<Vec3> out;
  for (double ux : levels)
    for (double uy : levels) {
      if (w.planar) {
        out.emplace_back(ux, uy, 0.0);
        continue;
      }
      for (double uz : levels) out.emplace_back(ux, uy, uz);
    }
  return out;
}

}  // namespace detail

/// Hybrid-A* over acceleration primitives toward `goal`. Collisions are
/// checked on `collision_grid`; when `x_tp` is given, nodes without line of
/// sight to it on `occlusion_grid` pay the occlusion penalty.
inline KinoPath search_to_goal(const KinoState& start, const KinoState& goal,
                               const std::optional<Vec3>& x_tp, const OccupancyGrid& collision_grid,
                               const OccupancyGrid& occlusion_grid, const SearchWeights& w) {
  if (!(w.tau > 0.0 && w.rho >= 0.0 && w.v_bin > 0.0 && w.a_m >= 0.0 && w.v_m > 0.0))
    throw InvalidSpec("search weights out of range");
  if (is_occupied(collision_grid, start.p)) throw StartOccupied("search start is occupied");

  const double p_occ = effective_occlusion_penalty(w);
  const double key_res = w.key_resolution > 0.0 ? w.key_resolution : collision_grid.resolution();
  auto key_of = [&](const KinoState& s) {
    detail::NodeKey k;
    for (int i = 0; i < 3; ++i) {
      k[static_cast<std::size_t>(i)] =
          static_cast<int>(std::floor((s.p[i] - collision_grid.origin()[i]) / key_res));
      k[static_cast<std::size_t>(i + 3)] = static_cast<int>(std::floor(s.v[i] / w.v_bin + 0.5));
    }
    return k;
  };
  auto heuristic = [&](const KinoState& s) {
    const ObvpResult d = obvp_cost(s, goal, w.rho);
    double h = d.cost + w.c_time * d.duration;
    if (x_tp && p_occ > 0.0 && !line_of_sight(occlusion_grid, s.p, *x_tp)) h += p_occ;
    return h;
  };
  auto at_goal = [&](const KinoState& s) {
    return (s.p - goal.p).norm() <= w.r_goal && (s.v - goal.v).norm() <= w.v_goal_tol;
  };

  std::vector<detail::SearchNode> nodes;
  std::unordered_map<detail::NodeKey, int, detail::NodeKeyHash> best;
  std::priority_queue<detail::QueueEntry, std::vector<detail::QueueEntry>, detail::QueueOrder> open;

  detail::SearchNode root;
  root.state = start;
  root.key = key_of(start);
  root.f = heuristic(start);
  nodes.push_back(root);
  best[root.key] = 0;
  open.push({root.f, 0.0, root.key, 0});

  auto build = [&](int idx, int expansions, bool reached) {
    KinoPath path;
    path.end_state = nodes[static_cast<std::size_t>(idx)].state;
    path.total_cost = nodes[static_cast<std::size_t>(idx)].g;
    path.expansions = expansions;
    path.reached_goal = reached;
    for (int i = idx; nodes[static_cast<std::size_t>(i)].parent >= 0; i = nodes[static_cast<std::size_t>(i)].parent) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      path.primitives.push_back(
          {n.u, w.tau, nodes[static_cast<std::size_t>(n.parent)].state, n.state});
    }
    std::reverse(path.primitives.begin(), path.primitives.end());
    return path;
  };

  if (at_goal(start)) return build(0, 0, true);

  const auto controls = detail::control_set(w);
  int expansions = 0;
  bool any_child = false;
  int closest = 0;
  double closest_dist = (start.p - goal.p).norm();
  while (!open.empty() && expansions < w.max_expansions) {
    const auto top = open.top();
    open.pop();
    auto& cur = nodes[static_cast<std::size_t>(top.node)];
    if (cur.closed || best[cur.key] != top.node) continue;
    cur.closed = true;
    const KinoState s = cur.state;
    const double g = cur.g;
    if (at_goal(s)) return build(top.node, expansions, true);
    ++expansions;

    for (const Vec3& u : controls) {
      KinoState child = propagate(s, u, w.tau);
      if (child.v.lpNorm<Eigen::Infinity>() > w.v_m + 1e-9) continue;
      if (!primitive_free(s, u, w.tau, collision_grid)) continue;
      const auto key = key_of(child);
      const double cg = g + edge_cost(u, w.tau, w);
      auto it = best.find(key);
      if (it != best.end()) {
        const auto& other = nodes[static_cast<std::size_t>(it->second)];
        if (other.closed || other.g <= cg) continue;
      }
      detail::SearchNode n;
      n.state = child;
      n.parent = top.node;
      n.u = u;
      n.g = cg;
      n.f = cg + heuristic(child);
      n.key = key;
      const int id = static_cast<int>(nodes.size());
      nodes.push_back(n);
      any_child = true;
      best[key] = id;
      open.push({n.f, n.g, key, id});
      const double dist = (child.p - goal.p).norm();
      if (dist < closest_dist ||
          (dist == closest_dist && n.f < nodes[static_cast<std::size_t>(closest)].f)) {
        closest_dist = dist;
        closest = id;
      }
    }
    if (expansions == 1 && !any_child) throw NoPath("no primitive can leave the start state");
  }
  return build(closest, expansions, false);
}

/// Search toward the blended goal of a predicted target trajectory.
inline KinoPath search(const KinoState& start, const PredictedTrajectory& traj, const OccupancyGrid& grid,
                       const SearchWeights& w) {
  const KinoState goal = goal_state(traj, traj.tc, w);
  const Vec3 x_tp = evaluate(traj, std::min(traj.tc + w.lookahead, traj.tp)).position;
  return search_to_goal(start, goal, x_tp, grid, grid, w);
}

/// Position of a path at time t after its start (clamped to the path span).
inline Vec3 path_position(const KinoPath& path, double t) {
  for (const auto& prim : path.primitives) {
    const double local = t - prim.start.t + path.primitives.front().start.t;
    if (local <= prim.tau) {
      const double s = std::max(local, 0.0);
      return prim.start.p + prim.start.v * s + 0.5 * prim.u * s * s;
    }
  }
  return path.end_state.p;
}

}  // namespace aerotrack
