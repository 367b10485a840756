#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aerotrack/common.hpp"
#include "aerotrack/corridor.hpp"
#include "aerotrack/grid_world.hpp"
#include "aerotrack/kino_search.hpp"
#include "aerotrack/map_spec.hpp"
#include "aerotrack/perception.hpp"
#include "aerotrack/prediction.hpp"
#include "aerotrack/traj_opt.hpp"

namespace aerotrack {

/// Piecewise linear walk through waypoints, smoothed by a moving average
/// over arc length. Each segment has its own speed.
class TargetScript {
 public:
  TargetScript() = default;
  TargetScript(std::vector<Vec3> waypoints, std::vector<double> speeds, double start_delay, double smoothing,
               double body_length)
      : waypoints_(std::move(waypoints)),
        speeds_(std::move(speeds)),
        start_delay_(start_delay),
        smoothing_(smoothing),
        body_length_(body_length) {
    if (waypoints_.empty()) throw InvalidScenario("target script needs at least one waypoint");
    if (speeds_.size() + 1 != std::max<std::size_t>(waypoints_.size(), 1))
      throw InvalidScenario("target script needs one speed per segment");
    for (double v : speeds_)
      if (!(v > 0.0)) throw InvalidScenario("target speeds must be > 0");
    if (!(body_length_ > 0.0)) throw InvalidScenario("target body length must be > 0");
    prepare();
  }

  const std::vector<Vec3>& waypoints() const { return waypoints_; }
  const std::vector<double>& speeds() const { return speeds_; }
  double start_delay() const { return start_delay_; }
  double smoothing() const { return smoothing_; }
  double body_length() const { return body_length_; }
  double max_speed() const { return speeds_.empty() ? 0.0 : *std::max_element(speeds_.begin(), speeds_.end()); }
  double end_time() const { return start_delay_ + seg_time_.back(); }

  TargetScript with_delay(double delay) const {
    TargetScript s = *this;
    s.start_delay_ = delay;
    return s;
  }

  Vec3 position(double t) const {
    const double s = arc_at(t - start_delay_);
    const double f = s / kStep;
    const std::size_t i = std::min(static_cast<std::size_t>(std::max(f, 0.0)), smooth_.size() - 1);
    if (i + 1 >= smooth_.size()) return smooth_.back();
    const double a = f - static_cast<double>(i);
    return (1.0 - a) * smooth_[i] + a * smooth_[i + 1];
  }
  Vec3 velocity(double t) const {
    const double h = 1e-3;
    return (position(t + h) - position(t - h)) / (2.0 * h);
  }

 private:
  static constexpr double kStep = 0.01;

  void prepare() {
    seg_time_.assign(1, 0.0);
    seg_arc_.assign(1, 0.0);
    for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
      const double len = (waypoints_[i + 1] - waypoints_[i]).norm();
      seg_arc_.push_back(seg_arc_.back() + len);
      seg_time_.push_back(seg_time_.back() + len / speeds_[i]);
    }
    const double total = seg_arc_.back();
    const int n = static_cast<int>(std::ceil(total / kStep));
    std::vector<Vec3> raw;
    raw.reserve(n + 1);
    std::size_t seg = 0;
    for (int k = 0; k <= n; ++k) {
      const double s = std::min(k * kStep, total);
      while (seg + 2 < seg_arc_.size() && s > seg_arc_[seg + 1]) ++seg;
      if (waypoints_.size() == 1) {
        raw.push_back(waypoints_[0]);
        continue;
      }
      const double len = seg_arc_[seg + 1] - seg_arc_[seg];
      const double a = len > 0.0 ? (s - seg_arc_[seg]) / len : 0.0;
      raw.push_back((1.0 - a) * waypoints_[seg] + a * waypoints_[seg + 1]);
    }
    // Centered box filter whose half width shrinks near the ends so the
    // first and last waypoints are kept.
    std::vector<Vec3> prefix(raw.size() + 1, Vec3::Zero());
    for (std::size_t k = 0; k < raw.size(); ++k) prefix[k + 1] = prefix[k] + raw[k];
    const int w = static_cast<int>(std::round(0.5 * smoothing_ / kStep));
    smooth_.resize(raw.size());
    const int last = static_cast<int>(raw.size()) - 1;
    for (int k = 0; k <= last; ++k) {
      const int h = std::min({w, k, last - k});
      smooth_[k] = (prefix[k + h + 1] - prefix[k - h]) / (2.0 * h + 1.0);
    }
  }

  double arc_at(double tau) const {
    if (tau <= 0.0) return 0.0;
    if (tau >= seg_time_.back()) return seg_arc_.back();
    const auto it = std::upper_bound(seg_time_.begin(), seg_time_.end(), tau);
    const std::size_t i = static_cast<std::size_t>(it - seg_time_.begin()) - 1;
    return seg_arc_[i] + (tau - seg_time_[i]) * speeds_[i];
  }

  std::vector<Vec3> waypoints_;
  std::vector<double> speeds_;
  double start_delay_ = 0.0;
  double smoothing_ = 0.6;
  double body_length_ = 0.5;
  std::vector<double> seg_time_{0.0}, seg_arc_{0.0};
  std::vector<Vec3> smooth_;
};

struct TrackerConfig {
  double rate_hz = 13.0;
  double d_track = 2.0;        ///< standoff behind the goal (m)
  double d_fail = 6.0;
  double t_fail = 3.0;
  double loss_timeout = 0.5;
  double robot_radius = 0.2;   ///< obstacle dilation for planning
  double max_detection_range = 5.0;  ///< calibrated band of the location regression
  double rediscovery_window = 5.0;
  double yaw_speed_threshold = 0.3;
  bool occlusion_penalty = true;
  bool gimbal_search = true;
};

/// Per-seed perturbations of the initial conditions.
struct Jitter {
  double quad_start = 0.0;    ///< radius of a uniform horizontal offset (m)
  double target_delay = 0.0;  ///< extra start delay drawn from [0, value] (s)
};

struct Scenario {
  std::string name = "scenario";
  MapSpec map;
  TargetScript target;
  Vec3 quad_start = Vec3(0.0, 0.0, 1.2);
  double quad_yaw = 0.0;
  double duration = 30.0;
  std::uint64_t seed = 0;
  CameraModel camera;
  PixelNoise noise;
  GimbalGains gimbal;
  double gimbal_rate_limit = 3.0;
  PredictionWeights prediction;
  SearchWeights search = default_search();
  CorridorOptions corridor;
  OptWeights optimizer;
  TrackerConfig tracker;
  Jitter jitter;

  static SearchWeights default_search() {
    SearchWeights w;
    w.planar = true;
    w.key_resolution = 0.2;
    w.max_expansions = 6000;
    return w;
  }
};

enum class Variant { kFull, kNoOcclusionPenalty, kNoGimbalSearch };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoOcclusionPenalty: return "no_occ";
    case Variant::kNoGimbalSearch: return "no_search";
  }
  return "full";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_occ" || s == "no_occlusion_penalty") return Variant::kNoOcclusionPenalty;
  if (s == "no_search" || s == "no_gimbal_search") return Variant::kNoGimbalSearch;
  throw InvalidScenario("unknown variant '" + s + "' (expected full, no_occ or no_search)");
}

inline Scenario apply_variant(Scenario s, Variant v) {
  if (v == Variant::kNoOcclusionPenalty) s.tracker.occlusion_penalty = false;
  if (v == Variant::kNoGimbalSearch) s.tracker.gimbal_search = false;
  return s;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) FieldReader::fail(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok |= it.key() == a;
    if (!ok) FieldReader::fail(path + "." + it.key(), "unknown field");
  }
}

inline bool bool_or(const FieldReader& r, const std::string& key, bool def) {
  if (!r.has(key)) return def;
  const auto& v = r.at(key);
  if (!v.is_boolean()) FieldReader::fail(r.sub(key), "expected true or false");
  return v.get<bool>();
}

inline int int_or(const FieldReader& r, const std::string& key, int def) {
  if (!r.has(key)) return def;
  const auto& v = r.at(key);
  if (!v.is_number_integer()) FieldReader::fail(r.sub(key), "expected an integer");
  return v.get<int>();
}

inline double positive_or(const FieldReader& r, const std::string& key, double def) {
  const double v = r.number_or(key, def);
  if (!(v > 0.0)) FieldReader::fail(r.sub(key), "must be > 0");
  return v;
}

inline double nonnegative_or(const FieldReader& r, const std::string& key, double def) {
  const double v = r.number_or(key, def);
  if (!(v >= 0.0)) FieldReader::fail(r.sub(key), "must be >= 0");
  return v;
}

inline Scenario parse_scenario_impl(const nlohmann::json& j) {
  check_keys(j, "scenario",
             {"name", "map", "target", "quad", "duration", "seed", "camera", "noise", "gimbal", "prediction",
              "search", "corridor", "optimizer", "tracker", "jitter"});
  FieldReader r(j, "scenario");
  Scenario s;
  if (r.has("name")) {
    if (!r.at("name").is_string()) FieldReader::fail(r.sub("name"), "expected a string");
    s.name = r.at("name").get<std::string>();
  }
  s.map = parse_map_spec(r.at("map"), r.sub("map"));
  s.duration = positive_or(r, "duration", s.duration);
  if (r.has("seed")) {
    const auto& v = r.at("seed");
    if (!v.is_number_integer() || v.get<long long>() < 0) FieldReader::fail(r.sub("seed"), "expected a non-negative integer");
    s.seed = v.get<std::uint64_t>();
  }

  {
    const std::string p = r.sub("target");
    const auto& tj = r.at("target");
    check_keys(tj, p, {"waypoints", "z", "speed", "speeds", "start_delay", "smoothing", "body_length"});
    FieldReader t(tj, p);
    const double z = t.number_or("z", 1.0);
    const auto& wps = t.at("waypoints");
    if (!wps.is_array() || wps.empty()) FieldReader::fail(t.sub("waypoints"), "expected a non-empty array");
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < wps.size(); ++i) {
      const std::string wp = t.sub("waypoints") + "[" + std::to_string(i) + "]";
      const auto& w = wps[i];
      if (!w.is_array() || (w.size() != 2 && w.size() != 3)) FieldReader::fail(wp, "expected [x, y] or [x, y, z]");
      Vec3 q(0.0, 0.0, z);
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (!w[k].is_number()) FieldReader::fail(wp, "expected numbers");
        q[static_cast<int>(k)] = w[k].get<double>();
      }
      pts.push_back(q);
    }
    std::vector<double> speeds;
    if (t.has("speeds")) {
      const auto& sp = t.at("speeds");
      if (!sp.is_array() || sp.size() + 1 != pts.size())
        FieldReader::fail(t.sub("speeds"), "expected one speed per segment (" + std::to_string(pts.size() - 1) + ")");
      for (std::size_t i = 0; i < sp.size(); ++i) {
        if (!sp[i].is_number() || !(sp[i].get<double>() > 0.0))
          FieldReader::fail(t.sub("speeds") + "[" + std::to_string(i) + "]", "expected a positive number");
        speeds.push_back(sp[i].get<double>());
      }
    } else {
      speeds.assign(pts.size() - 1, positive_or(t, "speed", 1.0));
    }
    s.target = TargetScript(pts, speeds, nonnegative_or(t, "start_delay", 0.0), nonnegative_or(t, "smoothing", 0.6),
                            positive_or(t, "body_length", 0.5));
  }

  {
    const auto& qj = r.at("quad");
    check_keys(qj, r.sub("quad"), {"position", "yaw"});
    FieldReader q(qj, r.sub("quad"));
    s.quad_start = q.vec<3>("position");
    s.quad_yaw = q.number_or("yaw", 0.0);
  }

  if (r.has("camera")) {
    const auto& cj = r.at("camera");
    check_keys(cj, r.sub("camera"), {"hfov_deg", "width", "height", "mount_height"});
    FieldReader c(cj, r.sub("camera"));
    const double hfov = c.number_or("hfov_deg", 87.0);
    if (!(hfov > 0.0 && hfov < 180.0)) FieldReader::fail(c.sub("hfov_deg"), "must lie in (0,180)");
    const int w = int_or(c, "width", 640), h = int_or(c, "height", 480);
    if (w <= 0 || h <= 0) FieldReader::fail(c.sub("width"), "image size must be positive");
    s.camera = CameraModel::with_fov(hfov * M_PI / 180.0, w, h);
    s.camera.mount_height = c.number_or("mount_height", s.camera.mount_height);
  }
  if (r.has("noise")) {
    const auto& nj = r.at("noise");
    check_keys(nj, r.sub("noise"), {"sigma_u", "sigma_body"});
    FieldReader n(nj, r.sub("noise"));
    s.noise.sigma_u = nonnegative_or(n, "sigma_u", s.noise.sigma_u);
    s.noise.sigma_body = nonnegative_or(n, "sigma_body", s.noise.sigma_body);
  }
  if (r.has("gimbal")) {
    const auto& gj = r.at("gimbal");
    check_keys(gj, r.sub("gimbal"), {"kp", "ki", "search_rate", "rate_limit"});
    FieldReader g(gj, r.sub("gimbal"));
    s.gimbal.kp = nonnegative_or(g, "kp", s.gimbal.kp);
    s.gimbal.ki = nonnegative_or(g, "ki", s.gimbal.ki);
    s.gimbal.search_rate = nonnegative_or(g, "search_rate", s.gimbal.search_rate);
    s.gimbal_rate_limit = positive_or(g, "rate_limit", s.gimbal_rate_limit);
  }
  if (r.has("prediction")) {
    const auto& pj = r.at("prediction");
    check_keys(pj, r.sub("prediction"),
               {"degree", "regularizer", "tau_w", "v_max", "a_max", "fit_window", "horizon"});
    FieldReader p(pj, r.sub("prediction"));
    auto& w = s.prediction;
    w.degree = int_or(p, "degree", w.degree);
    if (w.degree < 1) FieldReader::fail(p.sub("degree"), "must be >= 1");
    w.regularizer = nonnegative_or(p, "regularizer", w.regularizer);
    w.tau_w = positive_or(p, "tau_w", w.tau_w);
    w.v_max = positive_or(p, "v_max", w.v_max);
    w.a_max = positive_or(p, "a_max", w.a_max);
    w.fit_window = positive_or(p, "fit_window", w.fit_window);
    w.horizon = positive_or(p, "horizon", w.horizon);
  }
  if (r.has("search")) {
    const auto& sj = r.at("search");
    check_keys(sj, r.sub("search"),
               {"rho", "w_goal", "c_time", "p_occ", "tau", "a_m", "v_m", "lookahead", "r_goal", "v_goal_tol",
                "v_bin", "key_resolution", "max_expansions", "planar"});
    FieldReader q(sj, r.sub("search"));
    auto& w = s.search;
    w.rho = positive_or(q, "rho", w.rho);
    w.w_goal = q.number_or("w_goal", w.w_goal);
    if (!(w.w_goal >= 0.0 && w.w_goal <= 1.0)) FieldReader::fail(q.sub("w_goal"), "must lie in [0,1]");
    w.c_time = nonnegative_or(q, "c_time", w.c_time);
    w.p_occ = q.number_or("p_occ", w.p_occ);
    w.tau = positive_or(q, "tau", w.tau);
    w.a_m = positive_or(q, "a_m", w.a_m);
    w.v_m = positive_or(q, "v_m", w.v_m);
    w.lookahead = nonnegative_or(q, "lookahead", w.lookahead);
    w.r_goal = positive_or(q, "r_goal", w.r_goal);
    w.v_goal_tol = positive_or(q, "v_goal_tol", w.v_goal_tol);
    w.v_bin = positive_or(q, "v_bin", w.v_bin);
    w.key_resolution = nonnegative_or(q, "key_resolution", w.key_resolution);
    w.max_expansions = int_or(q, "max_expansions", w.max_expansions);
    if (w.max_expansions < 1) FieldReader::fail(q.sub("max_expansions"), "must be >= 1");
    w.planar = bool_or(q, "planar", w.planar);
  }
  if (r.has("corridor")) {
    const auto& cj = r.at("corridor");
    check_keys(cj, r.sub("corridor"), {"max_extent", "min_overlap_voxels"});
    FieldReader c(cj, r.sub("corridor"));
    s.corridor.max_extent = positive_or(c, "max_extent", s.corridor.max_extent);
    s.corridor.min_overlap_voxels = positive_or(c, "min_overlap_voxels", s.corridor.min_overlap_voxels);
  }
  if (r.has("optimizer")) {
    const auto& oj = r.at("optimizer");
    check_keys(oj, r.sub("optimizer"),
               {"kappa", "rho_t", "rho_v", "rho_a", "v_m", "a_m", "tol", "max_iterations", "t_min"});
    FieldReader o(oj, r.sub("optimizer"));
    auto& w = s.optimizer;
    w.kappa = positive_or(o, "kappa", w.kappa);
    w.rho_t = nonnegative_or(o, "rho_t", w.rho_t);
    w.rho_v = nonnegative_or(o, "rho_v", w.rho_v);
    w.rho_a = nonnegative_or(o, "rho_a", w.rho_a);
    w.v_m = positive_or(o, "v_m", w.v_m);
    w.a_m = positive_or(o, "a_m", w.a_m);
    w.tol = positive_or(o, "tol", w.tol);
    w.max_iterations = int_or(o, "max_iterations", w.max_iterations);
    w.t_min = positive_or(o, "t_min", w.t_min);
  }
  if (r.has("tracker")) {
    const auto& tj = r.at("tracker");
    check_keys(tj, r.sub("tracker"),
               {"rate_hz", "d_track", "d_fail", "t_fail", "loss_timeout", "robot_radius", "max_detection_range",
                "rediscovery_window", "yaw_speed_threshold", "occlusion_penalty", "gimbal_search"});
    FieldReader t(tj, r.sub("tracker"));
    auto& c = s.tracker;
    c.rate_hz = positive_or(t, "rate_hz", c.rate_hz);
    c.d_track = nonnegative_or(t, "d_track", c.d_track);
    c.d_fail = positive_or(t, "d_fail", c.d_fail);
    c.t_fail = positive_or(t, "t_fail", c.t_fail);
    c.loss_timeout = nonnegative_or(t, "loss_timeout", c.loss_timeout);
    c.robot_radius = nonnegative_or(t, "robot_radius", c.robot_radius);
    c.max_detection_range = positive_or(t, "max_detection_range", c.max_detection_range);
    c.rediscovery_window = positive_or(t, "rediscovery_window", c.rediscovery_window);
    c.yaw_speed_threshold = nonnegative_or(t, "yaw_speed_threshold", c.yaw_speed_threshold);
    c.occlusion_penalty = bool_or(t, "occlusion_penalty", c.occlusion_penalty);
    c.gimbal_search = bool_or(t, "gimbal_search", c.gimbal_search);
  }
  if (r.has("jitter")) {
    const auto& jj = r.at("jitter");
    check_keys(jj, r.sub("jitter"), {"quad_start", "target_delay"});
    FieldReader q(jj, r.sub("jitter"));
    s.jitter.quad_start = nonnegative_or(q, "quad_start", 0.0);
    s.jitter.target_delay = nonnegative_or(q, "target_delay", 0.0);
  }
  return s;
}

}  // namespace detail

/// Checks the cross-field invariants of a scenario.
inline void validate_scenario(const Scenario& s) {
  const Vec3 lo = s.map.origin;
  const Vec3 hi = lo + s.map.dims.cast<double>() * s.map.resolution;
  for (std::size_t i = 0; i < s.target.waypoints().size(); ++i) {
    const Vec3& p = s.target.waypoints()[i];
    if ((p.array() < lo.array()).any() || (p.array() >= hi.array()).any())
      throw InvalidScenario("scenario.target.waypoints[" + std::to_string(i) + "]: outside the map");
  }
  for (std::size_t i = 0; i < s.target.speeds().size(); ++i)
    if (s.target.speeds()[i] > s.prediction.v_max)
      throw InvalidScenario("scenario.target.speeds[" + std::to_string(i) + "]: exceeds prediction.v_max");
  if ((s.quad_start.array() < lo.array()).any() || (s.quad_start.array() >= hi.array()).any())
    throw InvalidScenario("scenario.quad.position: outside the map");
}

inline Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  try {
    s = detail::parse_scenario_impl(j);
  } catch (const InvalidSpec& e) {
    throw InvalidScenario(std::string(e.what()).substr(std::string("InvalidSpec: ").size()));
  }
  validate_scenario(s);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  try {
    return parse_scenario(load_json_file(path));
  } catch (const InvalidSpec& e) {
    throw InvalidScenario(std::string(e.what()).substr(std::string("InvalidSpec: ").size()));
  }
}

/// Raw map plus the inflated grids used for planning. Search runs on the
/// planning grid dilated by one more voxel so corridor cubes built on the
/// planning grid always have room to overlap.
struct WorldMaps {
  OccupancyGrid raw;
  OccupancyGrid planning;
  OccupancyGrid clearance;
};

inline std::shared_ptr<const WorldMaps> build_world_maps(const MapSpec& spec, double robot_radius) {
  auto m = std::make_shared<WorldMaps>();
  m->raw = build_map(spec);
  m->planning = robot_radius > 0.0 ? dilate(m->raw, robot_radius) : m->raw;
  m->clearance = dilate(m->planning, m->planning.resolution());
  return m;
}

/// Regression parameters for a camera, calibrated once per configuration on
/// synthetic noiseless samples and cached.
inline RegressionParams calibrated_regression(const CameraModel& cam, double body_length, double target_dz,
                                              double max_range) {
  static std::mutex mu;
  static std::map<std::vector<double>, RegressionParams> cache;
  const std::vector<double> key{cam.focal_px, double(cam.image_width_px), double(cam.image_height_px), body_length,
                                target_dz, max_range};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Rng rng(0x5eed);
  std::uniform_real_distribution<double> range(0.8, std::max(max_range, 1.0));
  const double half = 0.45 * cam.horizontal_fov();
  std::uniform_real_distribution<double> bearing(-half, half);
  const CameraPose origin;
  std::vector<RegressionSample> data;
  while (data.size() < 400) {
    const double d = range(rng), b = bearing(rng);
    const Vec3 target(d * std::cos(b), d * std::sin(b), target_dz);
    const auto f = project_target(target, body_length, cam, origin);
    if (!f) continue;
    data.push_back({*f, target});
  }
  const auto params = fit_regression(data).params;
  cache.emplace(key, params);
  return params;
}

enum class TrackState { kTracking, kRelocating };

inline const char* track_state_name(TrackState s) { return s == TrackState::kTracking ? "TRACKING" : "RELOCATING"; }

struct TrackerMode {
  TrackState state = TrackState::kTracking;
  PredictedTrajectory last_valid_prediction;
  double time_since_loss = 0.0;
  std::optional<Vec3> goal;  ///< static relocation goal
  int loss_episodes = 0;
};

/// Loss bookkeeping: TRACKING -> RELOCATING after `loss_timeout` of
/// consecutive invalid observations, RELOCATING -> TRACKING on a valid one.
inline TrackerMode relocation_update(TrackerMode m, const TargetObservation& obs, double dt, double loss_timeout) {
  if (obs.valid) {
    m.state = TrackState::kTracking;
    m.time_since_loss = 0.0;
    m.goal.reset();
    return m;
  }
  m.time_since_loss += dt;
  if (m.state == TrackState::kTracking && m.time_since_loss >= loss_timeout - 1e-12) {
    m.state = TrackState::kRelocating;
    ++m.loss_episodes;
    if (m.last_valid_prediction.valid())
      m.goal = evaluate(m.last_valid_prediction, m.last_valid_prediction.tp).position;
    else
      m.goal.reset();
  }
  return m;
}

struct StageTimes {
  double search_ms = 0.0;
  double corridor_ms = 0.0;
  double optimize_ms = 0.0;
  double planning_ms() const { return search_ms + corridor_ms + optimize_ms; }
};

struct TraceRow {
  int cycle = 0;
  double t = 0.0;
  Vec3 target = Vec3::Zero();
  bool obs_valid = false;
  Vec3 obs = Vec3::Zero();
  bool pred_valid = false;
  Vec3 pred_tc = Vec3::Zero();
  Vec3 pred_tp = Vec3::Zero();
  TrackState mode = TrackState::kTracking;
  std::string plan = "none";   ///< ok, kept, at_goal, idle or an error code
  double path_cost = 0.0;
  int path_reached = -1;  ///< 1 when the search met the goal region, -1 without a search
  int corridor_cubes = 0;
  double j_sigma = 0.0;
  Vec3 quad = Vec3::Zero();
  double quad_yaw = 0.0;
  double camera_yaw = 0.0;
  double distance = 0.0;
  bool los = false;
  int path_los = -1;  ///< 1 when the chosen path sees x_tp throughout, -1 without a path
  StageTimes times;
};

struct Metrics {
  bool success = false;
  bool collided = false;
  double longest_far_stretch = 0.0;  ///< s
  double mean_distance = 0.0;
  double max_distance = 0.0;
  double los_fraction = 0.0;
  double observed_fraction = 0.0;
  double path_los_fraction = 0.0;    ///< over tracking cycles that produced a path
  int path_cycles = 0;
  int loss_episodes = 0;
  int rediscovered = 0;              ///< episodes ended within the rediscovery window
  double mean_relocation_time = 0.0; ///< over episodes that ended
  double first_relocation_time = -1.0; ///< duration of the first episode, -1 if it never ended
  int plan_failures = 0;
  int cycles = 0;
  double mean_search_ms = 0.0;
  double mean_corridor_ms = 0.0;
  double mean_optimize_ms = 0.0;
  double mean_planning_ms = 0.0;
  double max_planning_ms = 0.0;
};

struct RunResult {
  Metrics metrics;
  std::vector<TraceRow> trace;
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline Vec3 horizontal(Vec3 v) {
  v.z() = 0.0;
  return v;
}

}  // namespace detail

/// Closed-loop simulation of one scenario run.
class Tracker {
 public:
  Tracker(Scenario s, std::uint64_t seed, std::shared_ptr<const WorldMaps> maps = nullptr)
      : s_(std::move(s)), maps_(std::move(maps)), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
    if (!maps_) maps_ = build_world_maps(s_.map, s_.tracker.robot_radius);
    dt_ = 1.0 / s_.tracker.rate_hz;
    Rng jitter(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    target_ = s_.target.with_delay(s_.target.start_delay() + s_.jitter.target_delay * u01(jitter));
    quad_p_ = s_.quad_start;
    if (s_.jitter.quad_start > 0.0) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const double r = s_.jitter.quad_start * std::sqrt(u01(jitter)), a = 2.0 * M_PI * u01(jitter);
        const Vec3 p = s_.quad_start + Vec3(r * std::cos(a), r * std::sin(a), 0.0);
        if (maps_->clearance.in_bounds(p) && !is_occupied(maps_->clearance, p)) {
          quad_p_ = p;
          break;
        }
      }
    }
    if (!maps_->raw.in_bounds(quad_p_) || is_occupied(maps_->raw, quad_p_))
      throw InvalidScenario("scenario.quad.position: start lies in an occupied voxel");
    body_yaw_ = s_.quad_yaw;
    gimbal_.yaw = s_.quad_yaw;
    gimbal_.yaw_rate_limit = s_.gimbal_rate_limit;
    const double cam_z = s_.quad_start.z() + s_.camera.mount_height;
    regression_ = calibrated_regression(s_.camera, s_.target.body_length(),
                                        s_.target.waypoints().front().z() - cam_z, s_.tracker.max_detection_range);
    search_ = s_.search;
    if (!s_.tracker.occlusion_penalty) search_.p_occ = 0.0;
  }

  bool done() const { return cycle_ >= total_cycles(); }
  int total_cycles() const { return static_cast<int>(std::floor(s_.duration * s_.tracker.rate_hz + 1e-9)); }
  const WorldMaps& maps() const { return *maps_; }

  TraceRow step() {
    TraceRow row;
    row.cycle = cycle_;
    row.t = t_;
    const Vec3 target = target_.position(t_);
    row.target = target;

    // Sensing.
    const CameraPose pose = camera_pose();
    TargetObservation obs = TargetObservation::invalid(t_);
    if ((target - pose.position).norm() <= s_.tracker.max_detection_range) {
      if (auto f = project_target(target, target_.body_length(), s_.camera, pose, &maps_->raw, t_)) {
        const ImageFeatures noisy = add_pixel_noise(*f, s_.noise, s_.camera, rng_);
        obs = localize(noisy, regression_, pose);
        gimbal_ = gimbal_track_step(gimbal_, noisy.u_px, s_.camera, dt_, s_.gimbal);
      }
    }
    row.obs_valid = obs.valid;
    row.obs = obs.position;

    // Mode machine and gimbal.
    const TrackState before = mode_.state;
    mode_ = relocation_update(mode_, obs, dt_, s_.tracker.loss_timeout);
    if (before == TrackState::kTracking && mode_.state == TrackState::kRelocating) {
      loss_start_ = t_;
      // Sweep first toward the bearing of the relocation goal.
      if (mode_.goal) {
        const Vec3 d = *mode_.goal - pose.position;
        const double err = wrap_angle(std::atan2(d.y(), d.x()) - gimbal_.yaw);
        if (std::abs(err) > 1e-9) gimbal_.search_sign = err > 0.0 ? 1.0 : -1.0;
      }
    }
    if (before == TrackState::kRelocating && mode_.state == TrackState::kTracking) {
      relocation_times_.push_back(t_ - loss_start_);
    }
    if (mode_.state == TrackState::kRelocating) {
      if (s_.tracker.gimbal_search) {
        gimbal_ = gimbal_search_step(gimbal_, dt_, s_.gimbal);
      } else {
        gimbal_.mode = GimbalMode::kSearching;
        gimbal_.integral = 0.0;
        gimbal_.yaw = body_yaw_;
      }
    }

    // Prediction.
    if (obs.valid) {
      buffer_.push_back(obs);
      const double keep = t_ - s_.prediction.fit_window - 1e-9;
      buffer_.erase(buffer_.begin(), std::find_if(buffer_.begin(), buffer_.end(),
                                                  [&](const TargetObservation& o) { return o.timestamp >= keep; }));
      try {
        mode_.last_valid_prediction = fit_predicted_trajectory(buffer_, t_, s_.prediction);
      } catch (const Error&) {
      }
    }
    const PredictedTrajectory& pred = mode_.last_valid_prediction;
    if (pred.valid()) {
      row.pred_valid = true;
      row.pred_tc = evaluate(pred, pred.tc).position;
      row.pred_tp = evaluate(pred, pred.tp).position;
    }

    // Goal selection and planning.
    const auto now = current_state();
    std::optional<KinoState> goal;
    std::optional<Vec3> x_tp;
    if (mode_.state == TrackState::kTracking) {
      if (pred.valid() && t_ <= pred.tp) {
        const double tc = std::clamp(t_, pred.t0, pred.tp);
        KinoState g = goal_state(pred, tc, search_);
        x_tp = evaluate(pred, std::min(tc + search_.lookahead, pred.tp)).position;
        g.p = standoff(g.p, g.v, now.p);
        goal = g;
      } else if (!buffer_.empty()) {
        KinoState g;
        g.p = standoff(buffer_.back().position, Vec3::Zero(), now.p);
        x_tp = buffer_.back().position;
        goal = g;
      }
    } else if (mode_.goal) {
      KinoState g;
      g.p = *mode_.goal;
      x_tp = *mode_.goal;
      goal = g;
    }
    if (goal) {
      goal->p.z() = s_.quad_start.z();
      goal->v.z() = 0.0;
      plan(now, *goal, x_tp, row);
    } else {
      row.plan = "idle";
    }

    // Execute for one period.
    const double t_next = t_ + dt_;
    const int checks = 8;
    for (int k = 1; k <= checks; ++k) {
      const Vec3 p = state_at(t_ + dt_ * k / checks).p;
      if (!maps_->raw.in_bounds(p) || is_occupied(maps_->raw, p)) collided_ = true;
    }
    const auto next = state_at(t_next);
    quad_p_ = next.p;
    quad_v_ = next.v;
    quad_a_ = next.a;
    if (detail::horizontal(quad_v_).norm() > s_.tracker.yaw_speed_threshold)
      body_yaw_ = std::atan2(quad_v_.y(), quad_v_.x());

    row.quad = quad_p_;
    row.quad_yaw = body_yaw_;
    row.camera_yaw = camera_pose().yaw;
    row.mode = mode_.state;
    t_ = t_next;
    ++cycle_;
    // Metrics are taken at the end of the cycle, against the target's new position.
    const Vec3 target_next = target_.position(t_);
    row.distance = (quad_p_ - target_next).norm();
    row.los = line_of_sight(maps_->raw, camera_pose().position, target_next);
    accumulate(row);
    return row;
  }

  RunResult run() {
    RunResult r;
    r.trace.reserve(total_cycles());
    while (!done()) r.trace.push_back(step());
    r.metrics = metrics();
    return r;
  }

  Metrics metrics() const {
    Metrics m = acc_;
    const double n = std::max(1, m.cycles);
    m.mean_distance = distance_sum_ / n;
    m.los_fraction = los_count_ / n;
    m.observed_fraction = observed_count_ / n;
    m.path_los_fraction = m.path_cycles > 0 ? path_los_count_ / m.path_cycles : 0.0;
    m.loss_episodes = mode_.loss_episodes;
    m.rediscovered = 0;
    double sum = 0.0;
    for (double d : relocation_times_) {
      sum += d;
      m.rediscovered += d <= s_.tracker.rediscovery_window;
    }
    m.mean_relocation_time = relocation_times_.empty() ? 0.0 : sum / relocation_times_.size();
    if (!relocation_times_.empty()) m.first_relocation_time = relocation_times_.front();
    m.mean_search_ms = search_ms_ / n;
    m.mean_corridor_ms = corridor_ms_ / n;
    m.mean_optimize_ms = optimize_ms_ / n;
    m.mean_planning_ms = (search_ms_ + corridor_ms_ + optimize_ms_) / n;
    m.collided = collided_;
    m.success = !collided_ && m.longest_far_stretch <= s_.tracker.t_fail;
    return m;
  }

 private:
  CameraPose camera_pose() const {
    CameraPose p;
    p.position = quad_p_ + Vec3(0.0, 0.0, s_.camera.mount_height);
    p.yaw = gimbal_.yaw;
    return p;
  }

  TrajSample current_state() const {
    TrajSample x;
    x.p = quad_p_;
    x.v = quad_v_;
    x.a = quad_a_;
    x.j = Vec3::Zero();
    return x;
  }

  /// Follows the active trajectory; holds at its end.
  TrajSample state_at(double t) const {
    if (traj_.empty()) {
      TrajSample x;
      x.p = quad_p_;
      x.v = x.a = x.j = Vec3::Zero();
      return x;
    }
    const double local = t - traj_t0_;
    if (local >= traj_.total_duration()) {
      TrajSample x = sample(traj_, traj_.total_duration());
      x.v = x.a = x.j = Vec3::Zero();
      return x;
    }
    return sample(traj_, std::max(local, 0.0));
  }

  Vec3 standoff(const Vec3& goal, const Vec3& goal_v, const Vec3& quad) const {
    // Behind the goal along its velocity, blending toward the quad's side as
    // the goal slows so that prediction noise cannot flip the offset.
    constexpr double kFullSpeed = 0.5;
    const Vec3 v = detail::horizontal(goal_v);
    const Vec3 away = detail::horizontal(quad - goal);
    const double w = std::min(v.norm() / kFullSpeed, 1.0);
    Vec3 dir = -w * (v.norm() > 1e-9 ? v.normalized() : Vec3::Zero());
    if (away.norm() > 1e-6) dir += (1.0 - w) * away.normalized();
    if (dir.norm() < 1e-6) return goal;
    return goal + s_.tracker.d_track * dir.normalized();
  }

  void plan(const TrajSample& now, const KinoState& goal, const std::optional<Vec3>& x_tp, TraceRow& row) {
    KinoState start;
    start.p = now.p;
    start.v = now.v;
    start.v.z() = 0.0;
    const OccupancyGrid& search_grid =
        is_occupied(maps_->clearance, start.p) ? maps_->planning : maps_->clearance;
    try {
      auto t0 = std::chrono::steady_clock::now();
      const KinoPath path = search_to_goal(start, goal, x_tp, search_grid, maps_->raw, search_);
      row.times.search_ms = detail::ms_since(t0);
      row.path_cost = path.total_cost;
      row.path_reached = path.reached_goal ? 1 : 0;
      if (mode_.state == TrackState::kTracking && x_tp && !path.primitives.empty()) {
        bool sees = true;
        for (const auto& prim : path.primitives) sees = sees && line_of_sight(maps_->raw, prim.end.p, *x_tp);
        row.path_los = sees ? 1 : 0;
      }
      if (path.primitives.empty()) {
        row.plan = "at_goal";
        return;
      }
      t0 = std::chrono::steady_clock::now();
      const Corridor corridor = build_corridor(path, maps_->planning, s_.corridor);
      row.times.corridor_ms = detail::ms_since(t0);
      row.corridor_cubes = static_cast<int>(corridor.cubes.size());
      Boundary bd;
      bd.p0 = now.p;
      bd.v0 = now.v;
      bd.a0 = now.a;
      bd.p1 = path.end_state.p;
      bd.v1 = path.end_state.v;
      bd.a1 = Vec3::Zero();
      t0 = std::chrono::steady_clock::now();
      PiecewiseTrajectory traj = optimize(corridor, bd, s_.optimizer);
      row.times.optimize_ms = detail::ms_since(t0);
      row.j_sigma = traj.cost;
      if (!trajectory_safe(traj)) {
        row.plan = "kept";
        ++acc_.plan_failures;
        return;
      }
      traj_ = std::move(traj);
      traj_t0_ = t_;
      row.plan = "ok";
    } catch (const Error& e) {
      row.plan = e.code();
      ++acc_.plan_failures;
    }
  }

  bool trajectory_safe(const PiecewiseTrajectory& traj) const {
    const double total = traj.total_duration();
    const int n = std::max(1, static_cast<int>(std::ceil(total / 0.01)));
    for (int i = 0; i <= n; ++i) {
      const Vec3 p = sample(traj, total * i / n).p;
      if (!maps_->planning.in_bounds(p) || is_occupied(maps_->raw, p)) return false;
    }
    return true;
  }

  void accumulate(const TraceRow& row) {
    ++acc_.cycles;
    distance_sum_ += row.distance;
    acc_.max_distance = std::max(acc_.max_distance, row.distance);
    los_count_ += row.los;
    observed_count_ += row.obs_valid;
    if (row.path_los >= 0) {
      ++acc_.path_cycles;
      path_los_count_ += row.path_los;
    }
    if (row.distance > s_.tracker.d_fail) {
      far_ += dt_;
      acc_.longest_far_stretch = std::max(acc_.longest_far_stretch, far_);
    } else {
      far_ = 0.0;
    }
    search_ms_ += row.times.search_ms;
    corridor_ms_ += row.times.corridor_ms;
    optimize_ms_ += row.times.optimize_ms;
    acc_.max_planning_ms = std::max(acc_.max_planning_ms, row.times.planning_ms());
  }

  Scenario s_;
  std::shared_ptr<const WorldMaps> maps_;
  Rng rng_;
  TargetScript target_;
  RegressionParams regression_;
  SearchWeights search_;
  double dt_ = 1.0 / 13.0;
  double t_ = 0.0;
  int cycle_ = 0;
  Vec3 quad_p_ = Vec3::Zero(), quad_v_ = Vec3::Zero(), quad_a_ = Vec3::Zero();
  double body_yaw_ = 0.0;
  GimbalState gimbal_;
  TrackerMode mode_;
  std::vector<TargetObservation> buffer_;
  PiecewiseTrajectory traj_;
  double traj_t0_ = 0.0;
  double loss_start_ = 0.0;
  std::vector<double> relocation_times_;
  bool collided_ = false;
  double far_ = 0.0;
  Metrics acc_;
  double distance_sum_ = 0.0, los_count_ = 0.0, observed_count_ = 0.0, path_los_count_ = 0.0;
  double search_ms_ = 0.0, corridor_ms_ = 0.0, optimize_ms_ = 0.0;
};

inline RunResult run_scenario(const Scenario& s, std::uint64_t seed, std::shared_ptr<const WorldMaps> maps = nullptr) {
  return Tracker(s, seed, std::move(maps)).run();
}

inline RunResult run_scenario(const Scenario& s) { return run_scenario(s, s.seed); }

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

}  // namespace detail

/// Per-cycle trace as CSV. Stage timings depend on the machine, so they are
/// only written when asked for.
inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows, bool with_timings = false) {
  out << "cycle,t,target_x,target_y,target_z,obs_valid,obs_x,obs_y,obs_z,pred_valid,pred_tc_x,pred_tc_y,pred_tc_z,"
         "pred_tp_x,pred_tp_y,pred_tp_z,mode,plan,path_cost,path_reached,corridor_cubes,j_sigma,quad_x,quad_y,quad_z,quad_yaw,"
         "camera_yaw,distance,los,path_los";
  if (with_timings) out << ",search_ms,corridor_ms,optimize_ms";
  out << "\n";
  using detail::fmt;
  for (const auto& r : rows) {
    out << r.cycle << ',' << fmt(r.t);
    for (int k = 0; k < 3; ++k) out << ',' << fmt(r.target[k]);
    out << ',' << int(r.obs_valid);
    for (int k = 0; k < 3; ++k) out << ',' << fmt(r.obs[k]);
    out << ',' << int(r.pred_valid);
    for (int k = 0; k < 3; ++k) out << ',' << fmt(r.pred_tc[k]);
    for (int k = 0; k < 3; ++k) out << ',' << fmt(r.pred_tp[k]);
    out << ',' << track_state_name(r.mode) << ',' << r.plan << ',' << fmt(r.path_cost) << ',' << r.path_reached << ',' << r.corridor_cubes
        << ',' << fmt(r.j_sigma);
    for (int k = 0; k < 3; ++k) out << ',' << fmt(r.quad[k]);
    out << ',' << fmt(r.quad_yaw) << ',' << fmt(r.camera_yaw) << ',' << fmt(r.distance) << ',' << int(r.los) << ','
        << r.path_los;
    if (with_timings)
      out << ',' << fmt(r.times.search_ms) << ',' << fmt(r.times.corridor_ms) << ',' << fmt(r.times.optimize_ms);
    out << "\n";
  }
}

struct BenchmarkRow {
  std::string scenario;
  std::string variant;
  int runs = 0;
  int successes = 0;
  double mean_distance = 0.0;
  double max_distance = 0.0;
  double los_fraction = 0.0;
  double path_los_fraction = 0.0;
  double loss_episodes = 0.0;   ///< mean per run
  int rediscovered_runs = 0;    ///< runs whose first loss episode ended within the window
  double mean_relocation_time = 0.0;
  double mean_planning_ms = 0.0;
};

/// Runs every (scenario, variant) pair over seeds scenario.seed + i. Jobs
/// are spread over worker threads; rows come back in input order.
inline std::vector<BenchmarkRow> benchmark(const std::vector<Scenario>& scenarios, const std::vector<Variant>& variants,
                                           int n_runs, unsigned workers = 0) {
  std::vector<BenchmarkRow> rows;
  if (n_runs <= 0 || scenarios.empty() || variants.empty()) return rows;
  std::vector<std::shared_ptr<const WorldMaps>> maps;
  for (const auto& s : scenarios) maps.push_back(build_world_maps(s.map, s.tracker.robot_radius));

  struct Job {
    std::size_t scenario, variant;
    int run;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    for (std::size_t v = 0; v < variants.size(); ++v)
      for (int k = 0; k < n_runs; ++k) jobs.push_back({i, v, k});
  std::vector<Metrics> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      const Scenario s = apply_variant(scenarios[job.scenario], variants[job.variant]);
      results[j] = run_scenario(s, s.seed + static_cast<std::uint64_t>(job.run), maps[job.scenario]).metrics;
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      BenchmarkRow row;
      row.scenario = scenarios[i].name;
      row.variant = variant_name(variants[v]);
      row.runs = n_runs;
      int relocs = 0;
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].scenario != i || jobs[j].variant != v) continue;
        const Metrics& m = results[j];
        row.successes += m.success;
        row.mean_distance += m.mean_distance / n_runs;
        row.max_distance = std::max(row.max_distance, m.max_distance);
        row.los_fraction += m.los_fraction / n_runs;
        row.path_los_fraction += m.path_los_fraction / n_runs;
        row.loss_episodes += double(m.loss_episodes) / n_runs;
        row.rediscovered_runs += m.first_relocation_time >= 0.0 &&
                                 m.first_relocation_time <= scenarios[i].tracker.rediscovery_window;
        if (m.rediscovered > 0) {
          row.mean_relocation_time += m.mean_relocation_time;
          ++relocs;
        }
        row.mean_planning_ms += m.mean_planning_ms / n_runs;
      }
      if (relocs > 0) row.mean_relocation_time /= relocs;
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  using detail::fmt;
  out << "scenario,variant,runs,successes,mean_distance,max_distance,los_fraction,path_los_fraction,loss_episodes,"
         "rediscovered_runs,mean_relocation_time,mean_planning_ms\n";
  for (const auto& r : rows)
    out << r.scenario << ',' << r.variant << ',' << r.runs << ',' << r.successes << ',' << fmt(r.mean_distance) << ','
        << fmt(r.max_distance) << ',' << fmt(r.los_fraction) << ',' << fmt(r.path_los_fraction) << ','
        << fmt(r.loss_episodes) << ',' << r.rediscovered_runs << ',' << fmt(r.mean_relocation_time) << ','
        << fmt(r.mean_planning_ms) << "\n";
}

inline std::string format_benchmark_table(const std::vector<BenchmarkRow>& rows) {
  const std::vector<std::string> head{"scenario", "variant", "success", "mean_dist", "los", "losses", "reloc_s",
                                      "plan_ms"};
  std::vector<std::vector<std::string>> cells{head};
  auto f2 = [](double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", x);
    return std::string(b);
  };
  for (const auto& r : rows)
    cells.push_back({r.scenario, r.variant, std::to_string(r.successes) + "/" + std::to_string(r.runs),
                     f2(r.mean_distance), f2(r.los_fraction), f2(r.loss_episodes), f2(r.mean_relocation_time),
                     f2(r.mean_planning_ms)});
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      const auto& cell = cells[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      out += c < 2 ? cell + pad : pad + cell;
      out += c + 1 < cells[i].size() ? "  " : "\n";
    }
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out += std::string(total - 2, '-') + "\n";
    }
  }
  return out;
}

}  // namespace aerotrack
