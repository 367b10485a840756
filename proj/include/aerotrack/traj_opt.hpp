#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "aerotrack/common.hpp"
#include "aerotrack/corridor.hpp"
#include "aerotrack/grid_world.hpp"

namespace aerotrack {

/// Position, velocity and acceleration at both ends of the trajectory.
struct Boundary {
  Vec3 p0 = Vec3::Zero(), v0 = Vec3::Zero(), a0 = Vec3::Zero();
  Vec3 p1 = Vec3::Zero(), v1 = Vec3::Zero(), a1 = Vec3::Zero();
};

struct OptWeights {
  double kappa = 1e-2;
  double rho_t = 20.0;
  double rho_v = 100.0;
  double rho_a = 100.0;
  double v_m = 3.0;
  double a_m = 4.0;
  double tol = 1e-4;
  int max_iterations = 200;
  double t_min = 1e-3;
  bool optimize_time = true;
  /// Sampled penalties, zero in the plain objective. The repair phase of
  /// optimize() raises them when the result leaves the corridor or
  /// overshoots the dynamic limits.
  double rho_contain = 0.0;
  double rho_dynamic = 0.0;
  double contain_margin = 0.01;
  int penalty_samples = 32;
};

using PieceCoeffs = Eigen::Matrix<double, 6, 3>;  ///< row n multiplies t^n

struct PiecewiseTrajectory {
  std::vector<PieceCoeffs> coeffs;
  std::vector<double> durations;
  std::vector<Vec3> waypoints;  ///< q_0 (start) .. q_M (goal)
  double cost = 0.0;            ///< final objective (without repair terms)
  double initial_cost = 0.0;
  int iterations = 0;
  bool repaired = false;

  int pieces() const { return static_cast<int>(durations.size()); }
  double total_duration() const {
    double t = 0.0;
    for (double d : durations) t += d;
    return t;
  }
  bool empty() const { return durations.empty(); }
};

struct TrajSample {
  Vec3 p, v, a, j;
};

namespace detail {

// Derivative `order` of a quintic piece at local time t.
inline Vec3 piece_derivative(const PieceCoeffs& c, double t, int order) {
  Vec3 out = Vec3::Zero();
  for (int n = order; n < 6; ++n) {
    double f = 1.0;
    for (int k = 0; k < order; ++k) f *= n - k;
    out += f * std::pow(t, n - order) * c.row(n).transpose();
  }
  return out;
}

/// Square band matrix with LU factorization without pivoting.
class BandedSystem {
 public:
  BandedSystem(int n, int lower, int upper)
      : n_(n), lower_(lower), upper_(upper), data_(static_cast<std::size_t>(n) * (lower + upper + 1), 0.0) {}

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i - j + upper_) * n_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i - j + upper_) * n_ + j]; }

  void factorize() {
    for (int k = 0; k < n_; ++k) {
      const double pivot = (*this)(k, k);
      if (std::abs(pivot) < 1e-14) throw SingularSystem("zero pivot in banded LU");
      const int i_max = std::min(k + lower_, n_ - 1);
      for (int i = k + 1; i <= i_max; ++i) (*this)(i, k) /= pivot;
      const int j_max = std::min(k + upper_, n_ - 1);
      for (int j = k + 1; j <= j_max; ++j) {
        const double v = (*this)(k, j);
        if (v == 0.0) continue;
        for (int i = k + 1; i <= i_max; ++i) (*this)(i, j) -= (*this)(i, k) * v;
      }
    }
  }

  // Solves A x = b in place.
  template <typename M>
  void solve(M& b) const {
    for (int j = 0; j < n_; ++j) {
      const int i_max = std::min(j + lower_, n_ - 1);
      for (int i = j + 1; i <= i_max; ++i) b.row(i) -= (*this)(i, j) * b.row(j);
    }
    for (int j = n_ - 1; j >= 0; --j) {
      b.row(j) /= (*this)(j, j);
      for (int i = std::max(0, j - upper_); i < j; ++i) b.row(i) -= (*this)(i, j) * b.row(j);
    }
  }

  // Solves A^T x = b in place.
  template <typename M>
  void solve_adjoint(M& b) const {
    for (int j = 0; j < n_; ++j) {
      b.row(j) /= (*this)(j, j);
      const int i_max = std::min(j + upper_, n_ - 1);
      for (int i = j + 1; i <= i_max; ++i) b.row(i) -= (*this)(j, i) * b.row(j);
    }
    for (int j = n_ - 1; j >= 0; --j) {
      for (int i = std::max(0, j - lower_); i < j; ++i) b.row(i) -= (*this)(j, i) * b.row(j);
    }
  }

 private:
  int n_, lower_, upper_;
  std::vector<double> data_;
};

/// The interpolation system for M quintic pieces. Row layout per junction
/// i: jerk and snap continuity, waypoint, then position, velocity and
/// acceleration continuity.
struct InnerSystem {
  int m = 0;
  BandedSystem a{1, 0, 0};
  Eigen::MatrixXd coeffs;          // 6M x 3
  std::vector<int> row_order;      // derivative order constrained by row r
  std::vector<int> row_piece;      // piece whose end a row evaluates (-1 for start rows)
};

inline InnerSystem solve_inner(const std::vector<Vec3>& q, const std::vector<double>& T, const Boundary& bd) {
  const int m = static_cast<int>(T.size());
  if (m < 1 || static_cast<int>(q.size()) != m - 1) throw InvalidSpec("waypoint/duration count mismatch");
  for (double t : T)
    if (!(t > 0.0)) throw SingularSystem("piece duration must be positive");
  InnerSystem sys;
  sys.m = m;
  const int n = 6 * m;
  sys.a = BandedSystem(n, 6, 6);
  auto& a = sys.a;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 3);
  sys.row_order.assign(static_cast<std::size_t>(n), 0);
  sys.row_piece.assign(static_cast<std::size_t>(n), -1);

  a(0, 0) = 1.0;
  a(1, 1) = 1.0;
  a(2, 2) = 2.0;
  b.row(0) = bd.p0.transpose();
  b.row(1) = bd.v0.transpose();
  b.row(2) = bd.a0.transpose();
  for (int i = 0; i < m - 1; ++i) {
    const double t1 = T[i], t2 = t1 * t1, t3 = t2 * t1, t4 = t2 * t2, t5 = t4 * t1;
    const int r = 6 * i + 3, c = 6 * i;
    a(r, c + 3) = 6.0;
    a(r, c + 4) = 24.0 * t1;
    a(r, c + 5) = 60.0 * t2;
    a(r, c + 9) = -6.0;
    a(r + 1, c + 4) = 24.0;
    a(r + 1, c + 5) = 120.0 * t1;
    a(r + 1, c + 10) = -24.0;
    const double pw[6] = {1.0, t1, t2, t3, t4, t5};
    for (int k = 0; k < 6; ++k) {
      a(r + 2, c + k) = pw[k];
      a(r + 3, c + k) = pw[k];
    }
    a(r + 3, c + 6) = -1.0;
    for (int k = 1; k < 6; ++k) a(r + 4, c + k) = k * pw[k - 1];
    a(r + 4, c + 7) = -1.0;
    for (int k = 2; k < 6; ++k) a(r + 5, c + k) = k * (k - 1) * pw[k - 2];
    a(r + 5, c + 8) = -2.0;
    b.row(r + 2) = q[static_cast<std::size_t>(i)].transpose();
    const int orders[6] = {3, 4, 0, 0, 1, 2};
    for (int k = 0; k < 6; ++k) {
      sys.row_order[static_cast<std::size_t>(r + k)] = orders[k];
      sys.row_piece[static_cast<std::size_t>(r + k)] = i;
    }
  }
  {
    const double t1 = T[static_cast<std::size_t>(m - 1)], t2 = t1 * t1, t3 = t2 * t1, t4 = t2 * t2, t5 = t4 * t1;
    const double pw[6] = {1.0, t1, t2, t3, t4, t5};
    const int r = n - 3, c = 6 * (m - 1);
    for (int k = 0; k < 6; ++k) a(r, c + k) = pw[k];
    for (int k = 1; k < 6; ++k) a(r + 1, c + k) = k * pw[k - 1];
    for (int k = 2; k < 6; ++k) a(r + 2, c + k) = k * (k - 1) * pw[k - 2];
    b.row(r) = bd.p1.transpose();
    b.row(r + 1) = bd.v1.transpose();
    b.row(r + 2) = bd.a1.transpose();
    for (int k = 0; k < 3; ++k) {
      sys.row_order[static_cast<std::size_t>(r + k)] = k;
      sys.row_piece[static_cast<std::size_t>(r + k)] = m - 1;
    }
  }
  a.factorize();
  a.solve(b);
  sys.coeffs = std::move(b);
  return sys;
}

inline PieceCoeffs piece_block(const Eigen::MatrixXd& coeffs, int i) { return coeffs.block<6, 3>(6 * i, 0); }

// Jerk energy of one piece (all axes) and its partials.
inline double jerk_energy(const PieceCoeffs& c, double T, PieceCoeffs* grad_c, double* grad_t) {
  double e = 0.0, gt = 0.0;
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  for (int k = 0; k < 3; ++k) {
    const double c3 = c(3, k), c4 = c(4, k), c5 = c(5, k);
    e += 36 * c3 * c3 * T + 144 * c3 * c4 * T2 + 192 * c4 * c4 * T3 + 240 * c3 * c5 * T3 +
         720 * c4 * c5 * T4 + 720 * c5 * c5 * T5;
    gt += 36 * c3 * c3 + 288 * c3 * c4 * T + 576 * c4 * c4 * T2 + 720 * c3 * c5 * T2 +
          2880 * c4 * c5 * T3 + 3600 * c5 * c5 * T4;
    if (grad_c) {
      (*grad_c)(3, k) += 72 * c3 * T + 144 * c4 * T2 + 240 * c5 * T3;
      (*grad_c)(4, k) += 144 * c3 * T2 + 384 * c4 * T3 + 720 * c5 * T4;
      (*grad_c)(5, k) += 240 * c3 * T3 + 720 * c4 * T4 + 1440 * c5 * T5;
    }
  }
  if (grad_t) *grad_t += gt;
  return e;
}

inline double cubic_hinge(double x) { return x > 0.0 ? x * x * x : 0.0; }
inline double cubic_hinge_d(double x) { return x > 0.0 ? 3.0 * x * x : 0.0; }

}  // namespace detail

/// Minimum-jerk quintic spline through the waypoints with the given times.
inline PiecewiseTrajectory inner_trajectory(const std::vector<Vec3>& q, const std::vector<double>& T,
                                            const Boundary& bd) {
  const auto sys = detail::solve_inner(q, T, bd);
  PiecewiseTrajectory traj;
  traj.durations = T;
  traj.waypoints.push_back(bd.p0);
  for (const auto& p : q) traj.waypoints.push_back(p);
  traj.waypoints.push_back(bd.p1);
  for (int i = 0; i < sys.m; ++i) traj.coeffs.push_back(detail::piece_block(sys.coeffs, i));
  return traj;
}

inline double jerk_cost(const PiecewiseTrajectory& traj) {
  double e = 0.0;
  for (int i = 0; i < traj.pieces(); ++i)
    e += detail::jerk_energy(traj.coeffs[static_cast<std::size_t>(i)], traj.durations[static_cast<std::size_t>(i)],
                             nullptr, nullptr);
  return e;
}

inline TrajSample sample(const PiecewiseTrajectory& traj, double t) {
  const double total = traj.total_duration();
  if (traj.empty() || t < -1e-9 || t > total + 1e-9)
    throw OutOfDomain("trajectory sampled at t=" + std::to_string(t) + " outside [0, " + std::to_string(total) + "]");
  t = std::clamp(t, 0.0, total);
  std::size_t i = 0;
  while (i + 1 < traj.durations.size() && t > traj.durations[i]) {
    t -= traj.durations[i];
    ++i;
  }
  t = std::min(t, traj.durations[i]);
  const auto& c = traj.coeffs[i];
  return {detail::piece_derivative(c, t, 0), detail::piece_derivative(c, t, 1), detail::piece_derivative(c, t, 2),
          detail::piece_derivative(c, t, 3)};
}

struct CostGradient {
  double cost = 0.0;
  double smooth = 0.0;    ///< J_S
  double corridor = 0.0;  ///< J_F
  double dynamic = 0.0;   ///< J_D
  double repair = 0.0;    ///< sampled penalties (zero unless enabled)
  std::vector<Vec3> grad_q;
  std::vector<double> grad_t;
};

/// Objective J_S + J_F + J_D and its gradient in waypoints and durations.
/// q holds the M-1 intermediate waypoints; waypoint i sits in the overlap
/// of cubes i and i+1.
inline CostGradient cost_and_gradient(const std::vector<Vec3>& q, const std::vector<double>& T,
                                      const Corridor& corridor, const Boundary& bd, const OptWeights& w) {
  const int m = static_cast<int>(T.size());
  if (static_cast<int>(corridor.cubes.size()) != m) throw InvalidSpec("one piece per corridor cube expected");
  CostGradient out;
  out.grad_q.assign(q.size(), Vec3::Zero());
  out.grad_t.assign(T.size(), 0.0);

  // Corridor barrier on the intermediate waypoints.
  for (int i = 0; i < m - 1; ++i) {
    const Vec3& p = q[static_cast<std::size_t>(i)];
    for (int c = i; c <= i + 1; ++c) {
      const auto slack = corridor.cubes[static_cast<std::size_t>(c)].slack(p);
      for (int f = 0; f < 6; ++f) {
        if (!(slack[static_cast<std::size_t>(f)] > 0.0))
          throw BarrierDomainViolated("waypoint " + std::to_string(i) + " left its cube overlap");
        out.corridor -= w.kappa * std::log(slack[static_cast<std::size_t>(f)]);
        const double sign = (f % 2 == 0) ? -1.0 : 1.0;  // d slack / d p along the face axis
        out.grad_q[static_cast<std::size_t>(i)][f / 2] -= w.kappa * sign / slack[static_cast<std::size_t>(f)];
      }
    }
  }

  // Aggressiveness: time plus finite-difference speed/acceleration hinges.
  std::vector<Vec3> wp;
  wp.push_back(bd.p0);
  for (const auto& p : q) wp.push_back(p);
  wp.push_back(bd.p1);
  std::vector<Vec3> gwp(wp.size(), Vec3::Zero());
  for (int i = 0; i < m; ++i) {
    out.dynamic += w.rho_t * T[static_cast<std::size_t>(i)];
    out.grad_t[static_cast<std::size_t>(i)] += w.rho_t;
  }
  for (int i = 1; i < m; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double tp = T[ui - 1], tn = T[ui], s = tp + tn;
    const Vec3 vel = (wp[ui + 1] - wp[ui - 1]) / s;
    const double ev = vel.squaredNorm() - w.v_m * w.v_m;
    if (ev > 0.0) {
      out.dynamic += w.rho_v * detail::cubic_hinge(ev);
      const Vec3 g = w.rho_v * detail::cubic_hinge_d(ev) * 2.0 * vel;
      gwp[ui + 1] += g / s;
      gwp[ui - 1] -= g / s;
      out.grad_t[ui - 1] -= g.dot(vel) / s;
      out.grad_t[ui] -= g.dot(vel) / s;
    }
    const Vec3 w1 = (wp[ui + 1] - wp[ui]) / tn, w0 = (wp[ui] - wp[ui - 1]) / tp;
    const Vec3 acc = 2.0 * (w1 - w0) / s;
    const double ea = acc.squaredNorm() - w.a_m * w.a_m;
    if (ea > 0.0) {
      out.dynamic += w.rho_a * detail::cubic_hinge(ea);
      const Vec3 g = w.rho_a * detail::cubic_hinge_d(ea) * 2.0 * acc;
      gwp[ui + 1] += g * 2.0 / (s * tn);
      gwp[ui] -= g * (2.0 / (s * tn) + 2.0 / (s * tp));
      gwp[ui - 1] += g * 2.0 / (s * tp);
      out.grad_t[ui] += g.dot(-2.0 * w1 / (tn * s) - acc / s);
      out.grad_t[ui - 1] += g.dot(2.0 * w0 / (tp * s) - acc / s);
    }
  }
  for (int i = 0; i < m - 1; ++i) out.grad_q[static_cast<std::size_t>(i)] += gwp[static_cast<std::size_t>(i + 1)];

  // Smoothness through the interpolation system and its adjoint.
  const auto sys = detail::solve_inner(q, T, bd);
  Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(6 * m, 3);
  for (int i = 0; i < m; ++i) {
    const PieceCoeffs c = detail::piece_block(sys.coeffs, i);
    PieceCoeffs g = PieceCoeffs::Zero();
    out.smooth += detail::jerk_energy(c, T[static_cast<std::size_t>(i)], &g, &out.grad_t[static_cast<std::size_t>(i)]);

    if (w.rho_contain > 0.0 || w.rho_dynamic > 0.0) {
      const Cube& cube = corridor.cubes[static_cast<std::size_t>(i)];
      const int k_max = std::max(1, w.penalty_samples);
      for (int k = 0; k <= k_max; ++k) {
        const double frac = static_cast<double>(k) / k_max, t = frac * T[static_cast<std::size_t>(i)];
        const Vec3 p = detail::piece_derivative(c, t, 0), v = detail::piece_derivative(c, t, 1);
        const Vec3 a = detail::piece_derivative(c, t, 2), j = detail::piece_derivative(c, t, 3);
        Vec3 gp = Vec3::Zero(), gv = Vec3::Zero(), ga = Vec3::Zero();
        if (w.rho_contain > 0.0) {
          const auto slack = cube.slack(p);
          for (int f = 0; f < 6; ++f) {
            const double viol = w.contain_margin - slack[static_cast<std::size_t>(f)];
            if (viol <= 0.0) continue;
            out.repair += w.rho_contain * detail::cubic_hinge(viol);
            const double sign = (f % 2 == 0) ? -1.0 : 1.0;
            gp[f / 2] -= w.rho_contain * detail::cubic_hinge_d(viol) * sign;
          }
        }
        if (w.rho_dynamic > 0.0) {
          const double ev = v.squaredNorm() - w.v_m * w.v_m, ea = a.squaredNorm() - w.a_m * w.a_m;
          out.repair += w.rho_dynamic * (detail::cubic_hinge(ev) + detail::cubic_hinge(ea));
          gv = w.rho_dynamic * detail::cubic_hinge_d(ev) * 2.0 * v;
          ga = w.rho_dynamic * detail::cubic_hinge_d(ea) * 2.0 * a;
        }
        for (int n = 0; n < 6; ++n) {
          g.row(n) += std::pow(t, n) * gp.transpose();
          if (n >= 1) g.row(n) += n * std::pow(t, n - 1) * gv.transpose();
          if (n >= 2) g.row(n) += n * (n - 1) * std::pow(t, n - 2) * ga.transpose();
        }
        out.grad_t[static_cast<std::size_t>(i)] += frac * (gp.dot(v) + gv.dot(a) + ga.dot(j));
      }
    }
    gc.block<6, 3>(6 * i, 0) = g;
  }
  sys.a.solve_adjoint(gc);  // gc now holds the adjoint multipliers
  for (int i = 0; i < m - 1; ++i) out.grad_q[static_cast<std::size_t>(i)] += gc.row(6 * i + 5).transpose();
  for (int r = 3; r < 6 * m; ++r) {
    const int piece = sys.row_piece[static_cast<std::size_t>(r)];
    const PieceCoeffs c = detail::piece_block(sys.coeffs, piece);
    const Vec3 d = detail::piece_derivative(c, T[static_cast<std::size_t>(piece)], sys.row_order[static_cast<std::size_t>(r)] + 1);
    out.grad_t[static_cast<std::size_t>(piece)] -= gc.row(r).dot(d.transpose());
  }

  out.cost = out.smooth + out.corridor + out.dynamic + out.repair;
  return out;
}

namespace detail {

// Trapezoidal profile time for distance d with cruise speed v and accel a.
inline double trapezoid_time(double d, double v, double a) {
  if (d <= 0.0) return 0.0;
  if (d >= v * v / a) return d / v + v / a;
  return 2.0 * std::sqrt(d / a);
}

struct Decision {
  std::vector<Vec3> q;
  std::vector<double> theta;
};

inline Eigen::VectorXd pack(const Decision& d) {
  Eigen::VectorXd x(3 * d.q.size() + d.theta.size());
  for (std::size_t i = 0; i < d.q.size(); ++i) x.segment<3>(static_cast<Eigen::Index>(3 * i)) = d.q[i];
  for (std::size_t i = 0; i < d.theta.size(); ++i) x[static_cast<Eigen::Index>(3 * d.q.size() + i)] = d.theta[i];
  return x;
}

inline Decision unpack(const Eigen::VectorXd& x, std::size_t nq, std::size_t nt) {
  Decision d;
  for (std::size_t i = 0; i < nq; ++i) d.q.push_back(x.segment<3>(static_cast<Eigen::Index>(3 * i)));
  for (std::size_t i = 0; i < nt; ++i) d.theta.push_back(x[static_cast<Eigen::Index>(3 * nq + i)]);
  return d;
}

struct Objective {
  const Corridor& corridor;
  const Boundary& bd;
  OptWeights w;
  std::vector<double> fixed_t;  // used when time is not optimized
  std::size_t nq, nt;

  std::vector<double> durations(const Eigen::VectorXd& x) const {
    if (!w.optimize_time) return fixed_t;
    std::vector<double> t(nt);
    for (std::size_t i = 0; i < nt; ++i) t[i] = w.t_min + std::exp(x[static_cast<Eigen::Index>(3 * nq + i)]);
    return t;
  }

  // Returns +inf outside the barrier domain.
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
    const auto d = unpack(x, nq, w.optimize_time ? nt : 0);
    const auto t = durations(x);
    CostGradient cg;
    try {
      cg = cost_and_gradient(d.q, t, corridor, bd, w);
    } catch (const BarrierDomainViolated&) {
      return std::numeric_limits<double>::infinity();
    } catch (const SingularSystem&) {
      // Trial steps can collapse durations to t_min; let the line search back off.
      return std::numeric_limits<double>::infinity();
    }
    if (grad) {
      grad->resize(x.size());
      for (std::size_t i = 0; i < nq; ++i) grad->segment<3>(static_cast<Eigen::Index>(3 * i)) = cg.grad_q[i];
      if (w.optimize_time)
        for (std::size_t i = 0; i < nt; ++i)
          (*grad)[static_cast<Eigen::Index>(3 * nq + i)] = cg.grad_t[i] * (t[i] - w.t_min);
    }
    return cg.cost;
  }
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
};

// Limited-memory BFGS with Armijo backtracking; every accepted iterate
// lowers f.
template <typename F>
LbfgsResult lbfgs(const F& f, Eigen::VectorXd x, double tol, int max_iterations, int memory = 8) {
  Eigen::VectorXd g;
  double fx = f(x, &g);
  if (!std::isfinite(fx)) throw BarrierDomainViolated("optimizer start point outside the barrier domain");
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int it = 0;
  for (; it < max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < tol) break;
    // Two-loop recursion.
    Eigen::VectorXd dir = -g;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[static_cast<std::size_t>(k)] = rho_hist[static_cast<std::size_t>(k)] * s_hist[static_cast<std::size_t>(k)].dot(dir);
      dir -= alpha[static_cast<std::size_t>(k)] * y_hist[static_cast<std::size_t>(k)];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(dir);
      dir += s_hist[k] * (alpha[k] - beta);
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12)) : 1.0;
    Eigen::VectorXd x_new, g_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = f(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new < fx)) break;
    const Eigen::VectorXd s = x_new - x, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    g = g_new;
    fx = f_new;
  }
  return {x, fx, it};
}

}  // namespace detail

/// Initial guess: waypoints at overlap centres, trapezoidal times at half
/// the speed limit.
inline std::pair<std::vector<Vec3>, std::vector<double>> initial_guess(const Corridor& corridor, const Boundary& bd,
                                                                       const OptWeights& w) {
  const std::size_t m = corridor.cubes.size();
  std::vector<Vec3> q;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const auto inter = cube_intersection(corridor.cubes[i], corridor.cubes[i + 1]);
    if (!inter) throw BarrierDomainViolated("consecutive corridor cubes do not overlap");
    q.push_back(inter->center());
  }
  std::vector<Vec3> pts{bd.p0};
  pts.insert(pts.end(), q.begin(), q.end());
  pts.push_back(bd.p1);
  std::vector<double> T;
  for (std::size_t i = 0; i < m; ++i)
    T.push_back(std::max(detail::trapezoid_time((pts[i + 1] - pts[i]).norm(), 0.5 * w.v_m, w.a_m), 0.1));
  return {q, T};
}

/// True when samples every `dt` lie inside the union of the cubes.
inline bool corridor_contains(const PiecewiseTrajectory& traj, const Corridor& corridor, double dt = 0.01) {
  const double total = traj.total_duration();
  for (double t = 0.0;; t += dt) {
    const double tt = std::min(t, total);
    const Vec3 p = sample(traj, tt).p;
    bool inside = false;
    for (const auto& c : corridor.cubes) inside |= c.contains(p);
    if (!inside) return false;
    if (tt >= total) break;
  }
  return true;
}

inline std::pair<double, double> max_speed_and_acceleration(const PiecewiseTrajectory& traj, double dt = 0.01) {
  double v = 0.0, a = 0.0;
  const double total = traj.total_duration();
  for (double t = 0.0;; t += dt) {
    const double tt = std::min(t, total);
    const auto s = sample(traj, tt);
    v = std::max(v, s.v.norm());
    a = std::max(a, s.a.norm());
    if (tt >= total) break;
  }
  return {v, a};
}

/// Spatial-temporal optimization of waypoints and durations inside the
/// corridor. If the plain objective leaves the corridor between waypoints
/// or overshoots the limits by more than 5%, sampled penalties are raised
/// and the descent resumes from the previous solution.
inline PiecewiseTrajectory optimize(const Corridor& corridor, const Boundary& bd, const OptWeights& w = {}) {
  if (corridor.cubes.empty()) throw InvalidSpec("empty corridor");
  auto [q0, t0] = initial_guess(corridor, bd, w);
  const std::size_t nq = q0.size(), nt = t0.size();

  detail::Decision d0{q0, {}};
  for (double t : t0) d0.theta.push_back(std::log(std::max(t - w.t_min, 1e-9)));
  if (!w.optimize_time) d0.theta.clear();
  Eigen::VectorXd x = detail::pack(d0);

  OptWeights plain = w;
  plain.rho_contain = plain.rho_dynamic = 0.0;
  const detail::Objective base{corridor, bd, plain, t0, nq, nt};
  const double initial = base(x, nullptr);

  auto build = [&](const Eigen::VectorXd& xs) {
    const auto dec = detail::unpack(xs, nq, w.optimize_time ? nt : 0);
    auto traj = inner_trajectory(dec.q, base.durations(xs), bd);
    traj.initial_cost = initial;
    traj.cost = base(xs, nullptr);
    return traj;
  };

  auto r = detail::lbfgs(detail::Objective{corridor, bd, w, t0, nq, nt}, x, w.tol, w.max_iterations);
  int iterations = r.iterations;
  auto traj = build(r.x);
  auto acceptable = [&](const PiecewiseTrajectory& tr) {
    const auto [vmax, amax] = max_speed_and_acceleration(tr);
    return corridor_contains(tr, corridor) && vmax <= 1.05 * w.v_m && amax <= 1.05 * w.a_m;
  };
  if (!acceptable(traj)) {
    for (double rho : {1e2, 1e4, 1e6, 1e8}) {
      OptWeights rw = w;
      rw.rho_contain = std::max(w.rho_contain, rho);
      rw.rho_dynamic = std::max(w.rho_dynamic, rho);
      r = detail::lbfgs(detail::Objective{corridor, bd, rw, t0, nq, nt}, r.x, w.tol, w.max_iterations);
      iterations += r.iterations;
      traj = build(r.x);
      traj.repaired = true;
      if (acceptable(traj)) break;
    }
  }
  traj.iterations = iterations;
  return traj;
}

}  // namespace aerotrack
