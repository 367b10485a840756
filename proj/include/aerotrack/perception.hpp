#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aerotrack/common.hpp"
#include "aerotrack/grid_world.hpp"

namespace aerotrack {

/// Level pinhole camera on a 1-DOF yaw gimbal. Camera frame: x along the
/// optical axis, y to the left, z up.
struct CameraModel {
  double focal_px = 320.0 / std::tan(0.5 * 87.0 * M_PI / 180.0);
  int image_width_px = 640;
  int image_height_px = 480;
  /// Camera centre height relative to the vehicle body origin.
  double mount_height = -0.1;

  double horizontal_fov() const { return 2.0 * std::atan(image_width_px / (2.0 * focal_px)); }
  double cx() const { return 0.5 * image_width_px; }
  double cy() const { return 0.5 * image_height_px; }

  static CameraModel with_fov(double hfov_rad, int width = 640, int height = 480) {
    CameraModel c;
    c.image_width_px = width;
    c.image_height_px = height;
    c.focal_px = 0.5 * width / std::tan(0.5 * hfov_rad);
    return c;
  }
};

struct CameraPose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;

  Vec3 to_camera(const Vec3& world) const {
    const Vec3 d = world - position;
    const double c = std::cos(yaw), s = std::sin(yaw);
    return Vec3(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
  }
  Vec3 to_world(const Vec3& cam) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return position + Vec3(c * cam.x() - s * cam.y(), s * cam.x() + c * cam.y(), cam.z());
  }
};

/// Upper-body pixel length and horizontal image coordinate of the target.
struct ImageFeatures {
  double body_px = 0.0;
  double u_px = 0.0;
  double timestamp = 0.0;
};

struct TargetObservation {
  Vec3 position = Vec3::Zero();
  double timestamp = 0.0;
  bool valid = false;

  static TargetObservation invalid(double t) { return {Vec3::Zero(), t, false}; }
};

struct PixelNoise {
  double sigma_u = 2.0;
  double sigma_body = 2.0;
};

/// Projects the target centre into the camera. Returns nullopt when the
/// target is behind the camera, outside the image, or hidden by an occupied
/// voxel (when a grid is supplied).
inline std::optional<ImageFeatures> project_target(const Vec3& target_world, double body_length,
                                                   const CameraModel& cam, const CameraPose& pose,
                                                   const OccupancyGrid* grid = nullptr,
                                                   double timestamp = 0.0) {
  if (!(body_length > 0.0)) throw InvalidSpec("target body length must be > 0");
  const Vec3 pc = pose.to_camera(target_world);
  if (pc.x() <= 1e-6) return std::nullopt;
  const double u = cam.cx() - cam.focal_px * pc.y() / pc.x();
  const double v = cam.cy() - cam.focal_px * pc.z() / pc.x();
  if (u < 0.0 || u > cam.image_width_px || v < 0.0 || v > cam.image_height_px) return std::nullopt;
  if (grid != nullptr && !line_of_sight(*grid, pose.position, target_world)) return std::nullopt;
  return ImageFeatures{cam.focal_px * body_length / pc.x(), u, timestamp};
}

/// Additive Gaussian pixel noise, clamped so the feature invariants hold.
inline ImageFeatures add_pixel_noise(ImageFeatures f, const PixelNoise& noise,
                                     const CameraModel& cam, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double du = noise.sigma_u * n01(rng);
  const double dl = noise.sigma_body * n01(rng);
  f.u_px = std::clamp(f.u_px + du, 0.0, static_cast<double>(cam.image_width_px));
  f.body_px = std::max(f.body_px + dl, 1.0);
  return f;
}

/// Parameters of the body-length / image-column location regression:
///   x = l1 e^(k1 L) + l2 e^(k2 L)
///   y = (l3 e^(k3 u) + l4 e^(k4 u)) (a x + b)
///   z = z_const
struct RegressionParams {
  std::array<double, 4> lambda{};
  std::array<double, 4> k{};
  double a = 0.0;
  double b = 0.0;
  double z_const = 0.0;

  double depth(double body_px) const {
    return lambda[0] * std::exp(k[0] * body_px) + lambda[1] * std::exp(k[1] * body_px);
  }
  double lateral(double u_px, double depth_m) const {
    return (lambda[2] * std::exp(k[2] * u_px) + lambda[3] * std::exp(k[3] * u_px)) *
           (a * depth_m + b);
  }
  Vec3 camera_point(const ImageFeatures& f) const {
    const double x = depth(f.body_px);
    return Vec3(x, lateral(f.u_px, x), z_const);
  }
};

struct RegressionSample {
  ImageFeatures features;
  Vec3 truth_cam;  ///< ground-truth target position in the camera frame
};

struct RegressionFit {
  RegressionParams params;
  double rms_residual = 0.0;
  int converged_starts = 0;
};

struct RegressionOptions {
  int starts = 16;
  int max_iterations = 200;
  std::uint64_t seed = 1;
  std::size_t min_samples = 50;
};

namespace detail {

// Parameters in scaled feature space: l = L / s_l, w = (u - c_u) / s_u.
// theta = [l1, k1, l2, k2, l3, k3, l4, k4, a, b]
using Theta = Eigen::Matrix<double, 10, 1>;

struct ScaledData {
  Eigen::VectorXd l, w, x, y;
  double s_l = 1.0, c_u = 0.0, s_u = 1.0;
};

inline void residuals_and_jacobian(const Theta& th, const ScaledData& d, Eigen::VectorXd& r,
                                   Eigen::MatrixXd* jac) {
  const Eigen::Index n = d.l.size();
  r.resize(2 * n);
  if (jac) jac->setZero(2 * n, 10);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e1 = std::exp(th[1] * d.l[i]), e2 = std::exp(th[3] * d.l[i]);
    const double xh = th[0] * e1 + th[2] * e2;
    const double e3 = std::exp(th[5] * d.w[i]), e4 = std::exp(th[7] * d.w[i]);
    const double g = th[4] * e3 + th[6] * e4;
    const double h = th[8] * xh + th[9];
    r[i] = xh - d.x[i];
    r[n + i] = g * h - d.y[i];
    if (!jac) continue;
    const double dx[4] = {e1, th[0] * d.l[i] * e1, e2, th[2] * d.l[i] * e2};
    for (int k = 0; k < 4; ++k) {
      (*jac)(i, k) = dx[k];
      (*jac)(n + i, k) = g * th[8] * dx[k];
    }
    (*jac)(n + i, 4) = e3 * h;
    (*jac)(n + i, 5) = th[4] * d.w[i] * e3 * h;
    (*jac)(n + i, 6) = e4 * h;
    (*jac)(n + i, 7) = th[6] * d.w[i] * e4 * h;
    (*jac)(n + i, 8) = g * xh;
    (*jac)(n + i, 9) = g;
  }
}

struct LmResult {
  Theta theta;
  double cost = std::numeric_limits<double>::infinity();
  double initial_cost = std::numeric_limits<double>::infinity();
};

// Damped Gauss-Newton (Levenberg-Marquardt with diagonal scaling).
inline LmResult levenberg_marquardt(Theta th, const ScaledData& d, int max_iterations) {
  Eigen::VectorXd r, r_try;
  Eigen::MatrixXd jac;
  residuals_and_jacobian(th, d, r, &jac);
  LmResult out;
  double cost = 0.5 * r.squaredNorm();
  out.initial_cost = cost;
  double mu = 1e-3;
  for (int it = 0; it < max_iterations && std::isfinite(cost); ++it) {
    const Eigen::Matrix<double, 10, 10> jtj = jac.transpose() * jac;
    const Theta grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-14) break;
    bool improved = false;
    while (mu < 1e14) {
      Eigen::Matrix<double, 10, 10> a = jtj;
      for (int k = 0; k < 10; ++k) a(k, k) += mu * std::max(jtj(k, k), 1e-12);
      const Theta step = a.ldlt().solve(-grad);
      const Theta cand = th + step;
      residuals_and_jacobian(cand, d, r_try, nullptr);
      const double c_try = 0.5 * r_try.squaredNorm();
      if (std::isfinite(c_try) && c_try < cost) {
        const double rel = (cost - c_try) / std::max(cost, 1e-300);
        th = cand;
        cost = c_try;
        mu = std::max(mu * 0.3, 1e-12);
        improved = true;
        if (rel < 1e-13) it = max_iterations;
        break;
      }
      mu *= 10.0;
    }
    if (!improved) break;
    residuals_and_jacobian(th, d, r, &jac);
  }
  out.theta = th;
  out.cost = cost;
  return out;
}

}  // namespace detail

/// Fits the location regression by multi-start damped Gauss-Newton on the
/// joint squared residual of both maps. Throws FitDiverged when the data is
/// too small or degenerate, or when no start converges.
inline RegressionFit fit_regression(const std::vector<RegressionSample>& data,
                                    const RegressionOptions& opt = {}) {
  if (data.size() < opt.min_samples)
    throw FitDiverged("ill-conditioned: need at least " + std::to_string(opt.min_samples) +
                      " samples, got " + std::to_string(data.size()));
  const auto n = static_cast<Eigen::Index>(data.size());
  detail::ScaledData d;
  d.l.resize(n); d.w.resize(n); d.x.resize(n); d.y.resize(n);
  double l_min = std::numeric_limits<double>::infinity(), l_max = 0.0;
  double u_min = l_min, u_max = -l_min, z_sum = 0.0;
  for (const auto& s : data) {
    l_min = std::min(l_min, s.features.body_px);
    l_max = std::max(l_max, s.features.body_px);
    u_min = std::min(u_min, s.features.u_px);
    u_max = std::max(u_max, s.features.u_px);
    z_sum += s.truth_cam.z();
  }
  if (!(l_max > 0.0) || (l_max - l_min) < 0.05 * l_max)
    throw FitDiverged("ill-conditioned: body length spans too narrow a range");
  d.s_l = l_max;
  d.c_u = 0.5 * (u_min + u_max);
  d.s_u = std::max(0.5 * (u_max - u_min), 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data[static_cast<std::size_t>(i)];
    d.l[i] = s.features.body_px / d.s_l;
    d.w[i] = (s.features.u_px - d.c_u) / d.s_u;
    d.x[i] = s.truth_cam.x();
    d.y[i] = s.truth_cam.y();
  }
  const double x_max = d.x.maxCoeff();

  Rng rng(opt.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  struct Candidate {
    detail::Theta theta;
    double cost;
  };
  std::optional<Candidate> best;
  int converged = 0;
  for (int s = 0; s < opt.starts; ++s) {
    detail::Theta th;
    const double ky = uni(0.05, 1.5);
    const double amp = (u01(rng) < 0.5 ? -1.0 : 1.0) * uni(0.3, 3.0);
    th << x_max * uni(0.5, 5.0), -uni(1.0, 8.0), x_max * uni(0.0, 1.0), -uni(0.0, 1.5),
        amp / (2.0 * ky), ky, -amp / (2.0 * ky), -ky * uni(0.5, 1.5), uni(0.5, 1.5), uni(-0.2, 0.2);
    const auto res = detail::levenberg_marquardt(th, d, opt.max_iterations);
    if (!std::isfinite(res.cost)) continue;
    const double reduction = (res.initial_cost - res.cost) / std::max(res.initial_cost, 1e-300);
    if (reduction < 1e-6 && res.cost > 1e-18) continue;
    ++converged;
    const bool better =
        !best || res.cost < best->cost * (1.0 - 1e-12) ||
        (res.cost <= best->cost * (1.0 + 1e-12) && res.theta.norm() < best->theta.norm());
    if (better) best = Candidate{res.theta, res.cost};
  }
  if (!best) throw FitDiverged("no start converged");

  const detail::Theta& th = best->theta;
  RegressionFit fit;
  fit.converged_starts = converged;
  fit.rms_residual = std::sqrt(2.0 * best->cost / static_cast<double>(2 * n));
  auto& p = fit.params;
  p.lambda[0] = th[0];
  p.k[0] = th[1] / d.s_l;
  p.lambda[1] = th[2];
  p.k[1] = th[3] / d.s_l;
  p.k[2] = th[5] / d.s_u;
  p.lambda[2] = th[4] * std::exp(-th[5] * d.c_u / d.s_u);
  p.k[3] = th[7] / d.s_u;
  p.lambda[3] = th[6] * std::exp(-th[7] * d.c_u / d.s_u);
  p.a = th[8];
  p.b = th[9];
  p.z_const = z_sum / static_cast<double>(n);
  return fit;
}

/// Image features -> world-frame observation through the fitted regression.
inline TargetObservation localize(const ImageFeatures& f, const RegressionParams& params,
                                  const CameraPose& pose) {
  return TargetObservation{pose.to_world(params.camera_point(f)), f.timestamp, true};
}

enum class GimbalMode { kTracking, kSearching };

struct GimbalGains {
  double kp = 0.004;  ///< rad/s per px
  double ki = 0.0005; ///< rad/s per px*s
  double search_rate = 1.5;
};

struct GimbalState {
  double yaw = 0.0;  ///< world frame, unbounded (continuous rotation)
  double yaw_rate_limit = 3.0;
  GimbalMode mode = GimbalMode::kTracking;
  double integral = 0.0;   ///< accumulated pixel error (px*s)
  double search_sign = 1.0;
};

/// One PI step driving the target column to the image centre.
inline GimbalState gimbal_track_step(GimbalState g, double u_px, const CameraModel& cam, double dt,
                                     const GimbalGains& gains = {}) {
  if (!(dt > 0.0)) throw InvalidSpec("gimbal step needs dt > 0");
  g.mode = GimbalMode::kTracking;
  const double err = u_px - cam.cx();  // positive: target right of centre
  const double integral = g.integral + err * dt;
  double rate = -(gains.kp * err + gains.ki * integral);
  const double sat = std::clamp(rate, -g.yaw_rate_limit, g.yaw_rate_limit);
  // Anti-windup: integrate only while unsaturated, and bound the I term.
  if (sat == rate) g.integral = integral;
  if (gains.ki > 0.0) {
    const double i_max = g.yaw_rate_limit / gains.ki;
    g.integral = std::clamp(g.integral, -i_max, i_max);
  }
  if (rate != 0.0) g.search_sign = rate > 0.0 ? 1.0 : -1.0;
  g.yaw += sat * dt;
  return g;
}

/// Constant-rate sweep while the target is lost; direction is persistent.
inline GimbalState gimbal_search_step(GimbalState g, double dt, const GimbalGains& gains = {}) {
  g.mode = GimbalMode::kSearching;
  g.integral = 0.0;
  const double rate = std::min(gains.search_rate, g.yaw_rate_limit);
  g.yaw += g.search_sign * rate * dt;
  return g;
}

}  // namespace aerotrack
