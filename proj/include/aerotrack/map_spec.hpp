#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aerotrack/common.hpp"
#include "aerotrack/grid_world.hpp"

namespace aerotrack {

struct BoxObstacle {
  Vec3 min_corner;
  Vec3 max_corner;
};

/// Vertical cylinder between z_min and z_max.
struct CylinderObstacle {
  double x = 0.0, y = 0.0, radius = 0.0, z_min = 0.0, z_max = 0.0;
};

/// Uniformly scattered vertical cylinders ("trees"). `density` is trees per
/// square metre of the region; the expected footprint fraction is
/// density * pi * radius^2 before overlaps.
struct ForestObstacle {
  double density = 0.0;
  double radius = 0.3;
  double height = 3.0;
  Eigen::Vector2d region_min = Eigen::Vector2d::Zero();
  Eigen::Vector2d region_max = Eigen::Vector2d::Zero();
  /// Discs (x, y, r) kept clear of tree centres' footprints.
  std::vector<Eigen::Vector3d> keep_out;
};

using Obstacle = std::variant<BoxObstacle, CylinderObstacle, ForestObstacle>;

struct MapSpec {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.1;
  Vec3i dims = Vec3i(100, 100, 30);
  double occ_threshold = 0.5;
  std::uint64_t seed = 0;
  std::vector<Obstacle> obstacles;
};

namespace detail {

inline std::string line_col_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') { ++line; col = 1; } else { ++col; }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const nlohmann::json& at(const std::string& key) const {
    if (!j_.is_object()) fail(path_, "expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) fail(path_ + "." + key, "missing required field");
    return *it;
  }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }
  std::string sub(const std::string& key) const { return path_ + "." + key; }

  double number(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number()) fail(sub(key), "expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& key, double def) const {
    return has(key) ? number(key) : def;
  }
  template <int N>
  Eigen::Matrix<double, N, 1> vec(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array() || static_cast<int>(v.size()) != N)
      fail(sub(key), "expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
      if (!v[i].is_number()) fail(sub(key) + "[" + std::to_string(i) + "]", "expected a number");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& msg) {
    throw InvalidSpec(field + ": " + msg);
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
};

}  // namespace detail

/// Parses a map description. Diagnostics name the offending field path
/// (e.g. "map.obstacles[2].radius").
inline MapSpec parse_map_spec(const nlohmann::json& j, const std::string& path = "map") {
  using detail::FieldReader;
  FieldReader r(j, path);
  MapSpec spec;
  spec.origin = r.vec<3>("origin");
  spec.resolution = r.number("resolution");
  if (!(spec.resolution > 0.0)) FieldReader::fail(r.sub("resolution"), "must be > 0");
  const Vec3 dims = r.vec<3>("dims");
  for (int k = 0; k < 3; ++k) {
    if (dims[k] < 1 || dims[k] != std::floor(dims[k]))
      FieldReader::fail(r.sub("dims"), "entries must be positive integers");
  }
  spec.dims = dims.cast<int>();
  spec.occ_threshold = r.number_or("occ_threshold", 0.5);
  if (!(spec.occ_threshold > 0.0 && spec.occ_threshold < 1.0))
    FieldReader::fail(r.sub("occ_threshold"), "must lie in (0,1)");
  if (r.has("seed")) {
    const auto& s = r.at("seed");
    if (!s.is_number_integer() || s.get<long long>() < 0)
      FieldReader::fail(r.sub("seed"), "expected a non-negative integer");
    spec.seed = s.get<std::uint64_t>();
  }
  if (r.has("obstacles")) {
    const auto& obs = r.at("obstacles");
    if (!obs.is_array()) FieldReader::fail(r.sub("obstacles"), "expected an array");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string op = r.sub("obstacles") + "[" + std::to_string(i) + "]";
      FieldReader o(obs[i], op);
      const auto& type = o.at("type");
      if (!type.is_string()) FieldReader::fail(o.sub("type"), "expected a string");
      const std::string t = type.get<std::string>();
      if (t == "box") {
        BoxObstacle b{o.vec<3>("min"), o.vec<3>("max")};
        if ((b.min_corner.array() > b.max_corner.array()).any())
          FieldReader::fail(op, "min must be <= max componentwise");
        spec.obstacles.emplace_back(b);
      } else if (t == "cylinder") {
        CylinderObstacle c;
        const Eigen::Vector2d center = o.vec<2>("center");
        c.x = center.x();
        c.y = center.y();
        c.radius = o.number("radius");
        if (!(c.radius > 0.0)) FieldReader::fail(o.sub("radius"), "must be > 0");
        c.z_min = o.number_or("z_min", spec.origin.z());
        c.z_max = o.number_or("z_max", spec.origin.z() + spec.dims.z() * spec.resolution);
        if (c.z_max < c.z_min) FieldReader::fail(o.sub("z_max"), "must be >= z_min");
        spec.obstacles.emplace_back(c);
      } else if (t == "forest") {
        ForestObstacle f;
        f.density = o.number("density");
        if (!(f.density >= 0.0)) FieldReader::fail(o.sub("density"), "must be >= 0");
        f.radius = o.number("radius");
        if (!(f.radius > 0.0)) FieldReader::fail(o.sub("radius"), "must be > 0");
        f.height = o.number_or("height", spec.dims.z() * spec.resolution);
        f.region_min = o.vec<2>("region_min");
        f.region_max = o.vec<2>("region_max");
        if ((f.region_min.array() >= f.region_max.array()).any())
          FieldReader::fail(o.sub("region_max"), "must exceed region_min");
        if (o.has("keep_out")) {
          const auto& ko = o.at("keep_out");
          if (!ko.is_array()) FieldReader::fail(o.sub("keep_out"), "expected an array");
          for (std::size_t k = 0; k < ko.size(); ++k) {
            const std::string kp = o.sub("keep_out") + "[" + std::to_string(k) + "]";
            if (!ko[k].is_array() || ko[k].size() != 3)
              FieldReader::fail(kp, "expected [x, y, radius]");
            Eigen::Vector3d d;
            for (int m = 0; m < 3; ++m) {
              if (!ko[k][m].is_number()) FieldReader::fail(kp, "expected numbers");
              d[m] = ko[k][m].get<double>();
            }
            f.keep_out.push_back(d);
          }
        }
        spec.obstacles.emplace_back(f);
      } else {
        FieldReader::fail(o.sub("type"), "unknown obstacle type '" + t + "'");
      }
    }
  }
  return spec;
}

/// Parses JSON text, reporting syntax errors with line/column.
inline nlohmann::json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidSpec(source + ": JSON syntax error at " + detail::line_col_of(text, e.byte > 0 ? e.byte - 1 : 0));
  }
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

namespace detail {

inline void rasterize_box(OccupancyGrid& grid, const Vec3& lo, const Vec3& hi) {
  // Conservative: every voxel touching the box (closed) is marked.
  const Vec3i a = grid.to_index(lo).cwiseMax(Vec3i::Zero());
  const Vec3i b = grid.to_index(hi).cwiseMin(grid.dims() - Vec3i::Ones());
  for (int z = a.z(); z <= b.z(); ++z)
    for (int y = a.y(); y <= b.y(); ++y)
      for (int x = a.x(); x <= b.x(); ++x) grid.set_occupied(Vec3i(x, y, z));
}

inline void rasterize_cylinder(OccupancyGrid& grid, const CylinderObstacle& c) {
  const double res = grid.resolution();
  const Vec3i a = grid.to_index(Vec3(c.x - c.radius, c.y - c.radius, c.z_min)).cwiseMax(Vec3i::Zero());
  const Vec3i b = grid.to_index(Vec3(c.x + c.radius, c.y + c.radius, c.z_max))
                      .cwiseMin(grid.dims() - Vec3i::Ones());
  const double r2 = c.radius * c.radius;
  for (int y = a.y(); y <= b.y(); ++y) {
    for (int x = a.x(); x <= b.x(); ++x) {
      // Closest point of the voxel column footprint to the axis.
      const Vec3 vmin = grid.voxel_min(Vec3i(x, y, 0));
      const double cx = std::clamp(c.x, vmin.x(), vmin.x() + res);
      const double cy = std::clamp(c.y, vmin.y(), vmin.y() + res);
      const double dx = cx - c.x, dy = cy - c.y;
      if (dx * dx + dy * dy > r2) continue;
      for (int z = a.z(); z <= b.z(); ++z) grid.set_occupied(Vec3i(x, y, z));
    }
  }
}

}  // namespace detail

/// Tree centres of a forest, a pure function of (forest, seed).
inline std::vector<Eigen::Vector2d> forest_tree_centers(const ForestObstacle& f, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ux(f.region_min.x(), f.region_max.x());
  std::uniform_real_distribution<double> uy(f.region_min.y(), f.region_max.y());
  const Eigen::Vector2d ext = f.region_max - f.region_min;
  const long n = std::lround(f.density * ext.x() * ext.y());
  std::vector<Eigen::Vector2d> centers;
  centers.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const Eigen::Vector2d c(ux(rng), uy(rng));
    bool blocked = false;
    for (const auto& ko : f.keep_out)
      if ((c - ko.head<2>()).norm() < ko.z() + f.radius) blocked = true;
    if (!blocked) centers.push_back(c);
  }
  return centers;
}

/// Rasterizes a map description into a grid. Deterministic in (spec, seed).
inline OccupancyGrid build_map(const MapSpec& spec) {
  OccupancyGrid grid(spec.origin, spec.resolution, spec.dims, spec.occ_threshold);
  std::uint64_t forest_index = 0;
  for (const auto& ob : spec.obstacles) {
    if (const auto* b = std::get_if<BoxObstacle>(&ob)) {
      detail::rasterize_box(grid, b->min_corner, b->max_corner);
    } else if (const auto* c = std::get_if<CylinderObstacle>(&ob)) {
      detail::rasterize_cylinder(grid, *c);
    } else if (const auto* f = std::get_if<ForestObstacle>(&ob)) {
      const std::uint64_t seed = spec.seed * 1000003ULL + forest_index++;
      for (const auto& ctr : forest_tree_centers(*f, seed)) {
        detail::rasterize_cylinder(
            grid, CylinderObstacle{ctr.x(), ctr.y(), f->radius, spec.origin.z(),
                                   spec.origin.z() + f->height});
      }
    }
  }
  return grid;
}

}  // namespace aerotrack
