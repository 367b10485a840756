#include "aerotrack/prediction.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

namespace aerotrack {
namespace {

using oracle::BernsteinMonomial;
using oracle::PolyDerivative;
using oracle::PolyEval;
using oracle::PolyProductIntegral01;

std::vector<TargetObservation> Stream(double t_end, double rate, auto&& path) {
  std::vector<TargetObservation> out;
  for (double t = t_end - 2.0; t <= t_end + 1e-9; t += 1.0 / rate) out.push_back({path(t), t, true});
  return out;
}

// --- bernstein / hodograph ---

TEST(BernsteinTest, Values) {
  EXPECT_DOUBLE_EQ(bernstein(5, 0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(bernstein(2, 1, 0.5), 0.5);
  EXPECT_THROW(bernstein(3, 4, 0.2), IndexOutOfRange);
  EXPECT_THROW(bernstein(3, -1, 0.2), IndexOutOfRange);
}

TEST(BernsteinTest, PartitionOfUnity) {
  for (int n = 0; n <= 10; ++n) {
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
      double sum = 0.0;
      for (int i = 0; i <= n; ++i) sum += bernstein(n, i, t);
      EXPECT_NEAR(sum, 1.0, 1e-12) << n << " " << t;
    }
  }
}

TEST(HodographTest, ConstantAndLine) {
  const std::vector<Vec3> constant(6, Vec3(1, 2, 3));
  for (const auto& d : hodograph(constant, 2.0)) EXPECT_EQ(d, Vec3::Zero());
  std::vector<Vec3> line;
  const Vec3 dir = Vec3(1, -2, 0.5).normalized();
  const double speed = 1.7, duration = 2.0;
  for (int i = 0; i <= 5; ++i) line.push_back(dir * speed * duration * i / 5.0);
  for (const auto& d : hodograph(line, duration)) EXPECT_NEAR((d - speed * dir).norm(), 0.0, 1e-12);
}

TEST(HodographTest, MatchesFiniteDifferences) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<Vec3> cp;
  for (int i = 0; i <= 5; ++i) cp.push_back(Vec3(u(rng), u(rng), u(rng)));
  const double scale = 2.5;
  const auto d = hodograph(cp, scale);
  for (int k = 0; k < 20; ++k) {
    const double s = 0.025 + 0.95 * k / 19.0;
    const double h = 1e-6;
    const Vec3 fd = (de_casteljau(cp, s + h) - de_casteljau(cp, s - h)) / (2 * h * scale);
    EXPECT_NEAR((fd - de_casteljau(d, s)).norm(), 0.0, 1e-6);
  }
}

// --- fitting ---

TEST(PredictionFitTest, StationaryTargetGivesConstantCurve) {
  const auto obs = Stream(10.0, 13.0, [](double) { return Vec3(2, -1, 1); });
  const auto traj = fit_predicted_trajectory(obs, 10.0);
  for (double t = traj.t0; t <= traj.tp; t += 0.05) {
    const auto s = evaluate(traj, t);
    EXPECT_LT(s.velocity.norm(), 1e-6);
    EXPECT_NEAR((s.position - Vec3(2, -1, 1)).norm(), 0.0, 1e-6);
  }
}

TEST(PredictionFitTest, ConstantVelocityExtrapolates) {
  const Vec3 v(0.6, 0.8, 0.0);
  const auto obs = Stream(5.0, 13.0, [&](double t) -> Vec3 { return Vec3(1, 1, 1) + v * t; });
  PredictionWeights w;
  w.regularizer = 1e-12;
  const auto traj = fit_predicted_trajectory(obs, 5.0, w);
  EXPECT_LT((evaluate(traj, 6.0).position - (Vec3(1, 1, 1) + v * 6.0)).norm(), 1e-4);
}

TEST(PredictionFitTest, UnconstrainedMatchesNormalEquations) {
  Rng rng(2);
  std::normal_distribution<double> noise(0.0, 0.2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto obs = Stream(3.0, 13.0, [&](double t) {
      return Vec3(std::sin(t) + noise(rng), 0.5 * t * t + noise(rng), noise(rng));
    });
    PredictionWeights w;
    w.v_max = 1e6;
    w.a_max = 1e6;
    w.regularizer = 0.1 * (trial + 1);
    const auto traj = fit_predicted_trajectory(obs, 3.0, w);
    const auto reference = oracle::NormalEquationFit(obs, 3.0, w);
    for (std::size_t i = 0; i < reference.size(); ++i)
      EXPECT_LT((traj.control_points[i] - reference[i]).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(PredictionFitTest, ConstrainedFitsAreFeasibleAndOptimal) {
  Rng rng(3);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::uniform_real_distribution<double> amp(0.5, 4.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double a = amp(rng), f = amp(rng);
    const auto obs = Stream(4.0, 13.0, [&](double t) {
      return Vec3(a * std::sin(f * t) + noise(rng), a * std::cos(f * t) + noise(rng), 1.0);
    });
    PredictionWeights w;
    const auto traj = fit_predicted_trajectory(obs, 4.0, w);
    EXPECT_LT(traj.kkt_residual, 1e-6);
    for (int k = 0; k <= 400; ++k) {
      const double t = traj.t0 + (traj.tp - traj.t0) * k / 400.0;
      const auto s = evaluate(traj, t);
      EXPECT_LE(s.velocity.lpNorm<Eigen::Infinity>(), w.v_max + 1e-6);
      EXPECT_LE(evaluate_acceleration(traj, t).lpNorm<Eigen::Infinity>(), w.a_max + 1e-6);
    }
  }
}

TEST(PredictionFitTest, OldObservationsMatterLess) {
  Rng rng(4);
  std::normal_distribution<double> noise(0.0, 0.1);
  int ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto base = Stream(2.0, 13.0, [&](double t) { return Vec3(t + noise(rng), 0.3 * t + noise(rng), 1.0); });
    PredictionWeights w;
    w.v_max = w.a_max = 1e6;
    const auto ref = fit_predicted_trajectory(base, 2.0, w);
    auto old_perturbed = base;
    old_perturbed.front().position += Vec3(0.5, 0.0, 0.0);
    auto new_perturbed = base;
    new_perturbed.back().position += Vec3(0.5, 0.0, 0.0);
    const auto a = fit_predicted_trajectory(old_perturbed, 2.0, w);
    const auto b = fit_predicted_trajectory(new_perturbed, 2.0, w);
    double da = 0.0, db = 0.0;
    for (int k = 0; k <= 200; ++k) {
      const double t = ref.t0 + (ref.tc - ref.t0) * k / 200.0;
      da += (evaluate(a, t).position - evaluate(ref, t).position).squaredNorm();
      db += (evaluate(b, t).position - evaluate(ref, t).position).squaredNorm();
    }
    if (da < db) ++ok;
  }
  EXPECT_EQ(ok, 20);
}

TEST(PredictionFitTest, ConvexHullContainsCurve) {
  Rng rng(5);
  std::normal_distribution<double> noise(0.0, 0.3);
  PredictionWeights w;
  w.degree = 3;
  for (int trial = 0; trial < 20; ++trial) {
    const auto obs = Stream(2.0, 13.0, [&](double t) {
      return Vec3(t + noise(rng), std::sin(2 * t) + noise(rng), 1.0 + noise(rng));
    });
    const auto traj = fit_predicted_trajectory(obs, 2.0, w);
    const auto& c = traj.control_points;
    Vec3 lo = c[0], hi = c[0];
    for (const auto& p : c) { lo = lo.cwiseMin(p); hi = hi.cwiseMax(p); }
    Eigen::Matrix3d edges;
    edges << c[1] - c[0], c[2] - c[0], c[3] - c[0];
    const bool tetra = std::abs(edges.determinant()) > 1e-9;
    for (int k = 0; k <= 100; ++k) {
      const double t = traj.t0 + (traj.tp - traj.t0) * k / 100.0;
      const Vec3 p = evaluate(traj, t).position;
      EXPECT_TRUE((p.array() >= lo.array() - 1e-9).all() && (p.array() <= hi.array() + 1e-9).all());
      if (tetra) {
        const Vec3 bary = edges.colPivHouseholderQr().solve(p - c[0]);
        EXPECT_GE(bary.minCoeff(), -1e-9);
        EXPECT_LE(bary.sum(), 1.0 + 1e-9);
      }
    }
  }
}

TEST(PredictionFitTest, InsufficientData) {
  std::vector<TargetObservation> obs;
  for (int i = 0; i < 5; ++i) obs.push_back({Vec3::Zero(), 0.1 * i, true});
  obs.push_back({Vec3::Zero(), 0.6, false});
  EXPECT_THROW(fit_predicted_trajectory(obs, 0.6), InsufficientData);
  std::vector<TargetObservation> unordered = {{Vec3::Zero(), 0.2, true}, {Vec3::Zero(), 0.1, true}};
  EXPECT_THROW(fit_predicted_trajectory(unordered, 0.2), InvalidSpec);
}

// --- evaluate ---

TEST(EvaluateTest, EndpointBasisSumAndDerivative) {
  const auto obs = Stream(3.0, 13.0, [](double t) { return Vec3(std::cos(t), t, 0.2 * t * t); });
  const auto traj = fit_predicted_trajectory(obs, 3.0);
  EXPECT_NEAR((evaluate(traj, traj.t0).position - traj.control_points.front()).norm(), 0.0, 1e-12);
  const int n = traj.degree();
  for (int k = 0; k <= 50; ++k) {
    const double t = traj.t0 + (traj.tp - traj.t0) * k / 50.0;
    const double s = (t - traj.t0) / traj.scale();
    Vec3 sum = Vec3::Zero();
    for (int i = 0; i <= n; ++i) sum += traj.control_points[i] * bernstein(n, i, s);
    EXPECT_NEAR((evaluate(traj, t).position - sum).norm(), 0.0, 1e-9);
    if (k > 0 && k < 50) {
      const double h = 1e-6;
      const Vec3 fd = (evaluate(traj, t + h).position - evaluate(traj, t - h).position) / (2 * h);
      EXPECT_NEAR((fd - evaluate(traj, t).velocity).norm(), 0.0, 1e-6);
    }
  }
  EXPECT_THROW(evaluate(traj, traj.tp + 0.01), OutOfDomain);
  EXPECT_THROW(evaluate(traj, traj.t0 - 0.01), OutOfDomain);
}

}  // namespace
}  // namespace aerotrack
