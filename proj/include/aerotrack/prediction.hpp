#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aerotrack/bezier.hpp"
#include "aerotrack/common.hpp"
#include "aerotrack/perception.hpp"
#include "aerotrack/qp.hpp"

namespace aerotrack {

struct PredictionWeights {
  int degree = 5;
  double regularizer = 0.05;  ///< multiplier on the acceleration integral
  double tau_w = 1.0;         ///< observation confidence decay (s)
  double v_max = 3.0;         ///< per-axis bound on predicted velocity
  double a_max = 3.0;         ///< per-axis bound on predicted acceleration
  double fit_window = 2.0;
  double horizon = 2.0;
};

/// Bezier curve over [t0, tp]; the part after tc is the extrapolation.
struct PredictedTrajectory {
  std::vector<Vec3> control_points;
  double t0 = 0.0;
  double tc = 0.0;
  double tp = 0.0;
  double kkt_residual = 0.0;

  int degree() const { return static_cast<int>(control_points.size()) - 1; }
  double scale() const { return tp - t0; }
  bool valid() const { return !control_points.empty(); }
};

struct CurveState {
  Vec3 position;
  Vec3 velocity;
};

inline double normalized_time(const PredictedTrajectory& traj, double t) {
  constexpr double kSlack = 1e-9;
  if (t < traj.t0 - kSlack || t > traj.tp + kSlack)
    throw OutOfDomain("prediction queried at t=" + std::to_string(t) + " outside [" +
                      std::to_string(traj.t0) + ", " + std::to_string(traj.tp) + "]");
  return std::clamp((t - traj.t0) / traj.scale(), 0.0, 1.0);
}

/// Position and velocity by de Casteljau on the curve and its hodograph.
inline CurveState evaluate(const PredictedTrajectory& traj, double t) {
  const double s = normalized_time(traj, t);
  return {de_casteljau(traj.control_points, s),
          de_casteljau(hodograph(traj.control_points, traj.scale()), s)};
}

inline Vec3 evaluate_acceleration(const PredictedTrajectory& traj, double t) {
  const double s = normalized_time(traj, t);
  const auto vel = hodograph(traj.control_points, traj.scale());
  if (vel.size() < 2) return Vec3::Zero();
  return de_casteljau(hodograph(vel, traj.scale()), s);
}

namespace detail {

// Gram matrix of the degree-m Bernstein basis on [0,1].
inline Eigen::MatrixXd bernstein_gram(int m) {
  Eigen::MatrixXd g(m + 1, m + 1);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= m; ++j)
      g(i, j) = binomial(m, i) * binomial(m, j) / ((2 * m + 1) * binomial(2 * m, i + j));
  return g;
}

}  // namespace detail

/// Per-axis quadratic program for the curve fit; exposed for diagnostics
/// and tests. Variables are the control points of one axis.
struct PredictionProblem {
  QuadraticProgram axis_qp[3];
  double t0 = 0.0, tc = 0.0, tp = 0.0;
  Eigen::Vector3d weighted_mean = Eigen::Vector3d::Zero();
};

inline PredictionProblem build_prediction_problem(const std::vector<TargetObservation>& obs,
                                                  double now, const PredictionWeights& w) {
  const int n = w.degree;
  if (n < 2) throw InvalidSpec("prediction degree must be >= 2");
  if (!(w.tau_w > 0.0 && w.v_max > 0.0 && w.a_max > 0.0 && w.horizon > 0.0 && w.fit_window > 0.0 &&
        w.regularizer >= 0.0))
    throw InvalidSpec("prediction weights must be positive");

  std::vector<const TargetObservation*> window;
  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& o : obs) {
    if (!o.valid) continue;
    if (o.timestamp <= last_t) throw InvalidSpec("observation timestamps must strictly increase");
    last_t = o.timestamp;
    if (o.timestamp >= now - w.fit_window - 1e-9 && o.timestamp <= now + 1e-9) window.push_back(&o);
  }
  if (static_cast<int>(window.size()) < n + 1)
    throw InsufficientData("need " + std::to_string(n + 1) + " valid observations in the window, have " +
                           std::to_string(window.size()));

  PredictionProblem prob;
  prob.t0 = window.front()->timestamp;
  prob.tc = now;
  prob.tp = now + w.horizon;
  const double scale = prob.tp - prob.t0;

  const auto m = static_cast<Eigen::Index>(window.size());
  Eigen::MatrixXd basis(m, n + 1);
  Eigen::VectorXd weights(m);
  Eigen::MatrixXd targets(m, 3);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& o = *window[static_cast<std::size_t>(j)];
    const double s = (o.timestamp - prob.t0) / scale;
    for (int i = 0; i <= n; ++i) basis(j, i) = bernstein(n, i, s);
    weights[j] = std::exp(-(now - o.timestamp) / w.tau_w);
    targets.row(j) = o.position.transpose();
  }
  prob.weighted_mean = (weights.transpose() * targets).transpose() / weights.sum();

  // Second differences -> acceleration control points (times n(n-1)).
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n - 1, n + 1);
  for (int k = 0; k < n - 1; ++k) {
    second(k, k) = 1.0;
    second(k, k + 1) = -2.0;
    second(k, k + 2) = 1.0;
  }
  second *= n * (n - 1);
  const Eigen::MatrixXd reg = second.transpose() * detail::bernstein_gram(n - 2) * second *
                              (2.0 * w.regularizer / std::pow(scale, 3));
  const Eigen::MatrixXd data_h = 2.0 * basis.transpose() * weights.asDiagonal() * basis;

  // Hodograph bounds: +-vel rows, then +-acc rows.
  const int rows = 2 * n + 2 * (n - 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, n + 1);
  Eigen::VectorXd b(rows);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n + 1);
    row[i] = -n / scale;
    row[i + 1] = n / scale;
    a.row(r) = row;
    b[r++] = w.v_max;
    a.row(r) = -row;
    b[r++] = w.v_max;
  }
  for (int k = 0; k < n - 1; ++k) {
    const Eigen::RowVectorXd row = second.row(k) / (scale * scale);
    a.row(r) = row;
    b[r++] = w.a_max;
    a.row(r) = -row;
    b[r++] = w.a_max;
  }

  for (int axis = 0; axis < 3; ++axis) {
    auto& qp = prob.axis_qp[axis];
    qp.H = data_h + reg;
    qp.g = -2.0 * basis.transpose() * weights.asDiagonal() * targets.col(axis);
    qp.A = a;
    qp.b = b;
  }
  return prob;
}

/// Weighted, regularized Bezier fit of recent observations with hodograph
/// velocity/acceleration bounds, extended over the prediction horizon.
inline PredictedTrajectory fit_predicted_trajectory(const std::vector<TargetObservation>& obs,
                                                    double now, const PredictionWeights& w = {}) {
  const PredictionProblem prob = build_prediction_problem(obs, now, w);
  const int n = w.degree;
  PredictedTrajectory traj;
  traj.t0 = prob.t0;
  traj.tc = prob.tc;
  traj.tp = prob.tp;
  traj.control_points.assign(static_cast<std::size_t>(n + 1), Vec3::Zero());
  for (int axis = 0; axis < 3; ++axis) {
    // A constant curve has zero derivative control points, hence is feasible.
    const Eigen::VectorXd start = Eigen::VectorXd::Constant(n + 1, prob.weighted_mean[axis]);
    const QpSolution sol = solve_qp_active_set(prob.axis_qp[axis], start);
    traj.kkt_residual = std::max(traj.kkt_residual, sol.kkt_residual);
    for (int i = 0; i <= n; ++i) traj.control_points[static_cast<std::size_t>(i)][axis] = sol.x[i];
  }
  return traj;
}

}  // namespace aerotrack
