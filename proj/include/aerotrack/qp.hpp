#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "aerotrack/common.hpp"

namespace aerotrack {

/// min 1/2 x'Hx + g'x  s.t.  A x <= b, with H positive definite.
struct QuadraticProgram {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  ///< one per inequality row, >= 0
  int iterations = 0;
  double kkt_residual = 0.0;
};

/// Max of stationarity, primal violation, dual sign and complementarity
/// residuals.
inline double kkt_residual(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd stat = qp.H * x + qp.g + qp.A.transpose() * lambda;
  double r = stat.lpNorm<Eigen::Infinity>();
  if (qp.A.rows() > 0) {
    const Eigen::VectorXd slack = qp.b - qp.A * x;
    for (Eigen::Index i = 0; i < slack.size(); ++i) {
      r = std::max(r, -slack[i]);
      r = std::max(r, -lambda[i]);
      r = std::max(r, std::abs(lambda[i] * slack[i]));
    }
  }
  return r;
}

/// Primal active-set method started from a feasible point `x0`.
inline QpSolution solve_qp_active_set(const QuadraticProgram& qp, Eigen::VectorXd x0,
                                      int max_iterations = 500) {
  const Eigen::Index n = qp.H.rows(), m = qp.A.rows();
  constexpr double kTol = 1e-10;
  if (m > 0 && ((qp.A * x0 - qp.b).array() > 1e-9).any())
    throw QPInfeasible("active-set start point violates the constraints");

  std::vector<Eigen::Index> working;
  // Seed the working set with constraints active at x0 (kept independent).
  auto independent = [&](Eigen::Index row) {
    if (working.empty()) return true;
    Eigen::MatrixXd aw(static_cast<Eigen::Index>(working.size()) + 1, n);
    for (std::size_t k = 0; k < working.size(); ++k) aw.row(static_cast<Eigen::Index>(k)) = qp.A.row(working[k]);
    aw.row(aw.rows() - 1) = qp.A.row(row);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(aw);
    lu.setThreshold(1e-10);
    return lu.rank() == aw.rows();
  };
  for (Eigen::Index i = 0; i < m; ++i)
    if (std::abs(qp.A.row(i).dot(x0) - qp.b[i]) < 1e-12 && independent(i)) working.push_back(i);

  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  QpSolution sol;
  for (int it = 0; it < max_iterations; ++it) {
    sol.iterations = it + 1;
    const auto w = static_cast<Eigen::Index>(working.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + w, n + w);
    kkt.topLeftCorner(n, n) = qp.H;
    for (Eigen::Index k = 0; k < w; ++k) {
      kkt.block(n + k, 0, 1, n) = qp.A.row(working[static_cast<std::size_t>(k)]);
      kkt.block(0, n + k, n, 1) = qp.A.row(working[static_cast<std::size_t>(k)]).transpose();
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + w);
    rhs.head(n) = -(qp.H * x + qp.g);
    const Eigen::VectorXd z = kkt.partialPivLu().solve(rhs);
    const Eigen::VectorXd p = z.head(n);

    if (p.lpNorm<Eigen::Infinity>() < kTol * std::max(1.0, x.lpNorm<Eigen::Infinity>())) {
      lambda.setZero();
      Eigen::Index most_negative = -1;
      double min_mult = -kTol;
      for (Eigen::Index k = 0; k < w; ++k) {
        const double mult = z[n + k];
        lambda[working[static_cast<std::size_t>(k)]] = mult;
        if (mult < min_mult) {
          min_mult = mult;
          most_negative = k;
        }
      }
      if (most_negative < 0) {
        for (Eigen::Index i = 0; i < m; ++i) lambda[i] = std::max(lambda[i], 0.0);
        sol.x = x;
        sol.multipliers = lambda;
        sol.kkt_residual = kkt_residual(qp, x, lambda);
        return sol;
      }
      working.erase(working.begin() + most_negative);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      const double ap = qp.A.row(i).dot(p);
      if (ap <= kTol) continue;
      const double step = (qp.b[i] - qp.A.row(i).dot(x)) / ap;
      if (step < alpha) {
        alpha = std::max(step, 0.0);
        blocking = i;
      }
    }
    x += alpha * p;
    // A row dependent on the working set has a'p == 0 and never blocks.
    if (blocking >= 0 && independent(blocking)) working.push_back(blocking);
  }
  throw QPInfeasible("active-set iteration limit reached");
}

}  // namespace aerotrack
