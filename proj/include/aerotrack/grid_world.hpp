#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "aerotrack/common.hpp"

namespace aerotrack {

/// Axis-aligned box. Equivalent to A x <= b with A the six outward
/// axis normals and b = (max, -min).
struct Cube {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Zero();

  bool contains(const Vec3& p, double margin = 0.0) const {
    return (p.array() >= min_corner.array() + margin).all() &&
           (p.array() <= max_corner.array() - margin).all();
  }
  bool contains(const Cube& other) const {
    return (other.min_corner.array() >= min_corner.array()).all() &&
           (other.max_corner.array() <= max_corner.array()).all();
  }
  Vec3 center() const { return 0.5 * (min_corner + max_corner); }
  Vec3 size() const { return max_corner - min_corner; }
  double volume() const { return size().prod(); }

  /// Slack b - A x for the six halfspaces, ordered +x,-x,+y,-y,+z,-z.
  std::array<double, 6> slack(const Vec3& p) const {
    return {max_corner.x() - p.x(), p.x() - min_corner.x(),
            max_corner.y() - p.y(), p.y() - min_corner.y(),
            max_corner.z() - p.z(), p.z() - min_corner.z()};
  }

  bool operator==(const Cube&) const = default;
};

/// Componentwise overlap of two cubes; empty (nullopt) when any axis is
/// disjoint. Touching faces count as a degenerate, non-empty overlap.
inline std::optional<Cube> cube_intersection(const Cube& a, const Cube& b) {
  Cube c{a.min_corner.cwiseMax(b.min_corner), a.max_corner.cwiseMin(b.max_corner)};
  if ((c.min_corner.array() > c.max_corner.array()).any()) return std::nullopt;
  return c;
}

/// Dense voxel occupancy map. Values are probabilities in [0,1]; a voxel is
/// occupied when its value reaches the threshold. Everything outside the
/// bounds counts as occupied.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Vec3& origin, double resolution, const Vec3i& dims,
                double occ_threshold = 0.5)
      : origin_(origin), resolution_(resolution), dims_(dims), occ_threshold_(occ_threshold) {
    if (!(resolution > 0.0)) throw InvalidSpec("resolution must be > 0");
    if ((dims.array() <= 0).any()) throw InvalidSpec("dims must be positive");
    if (!(occ_threshold > 0.0 && occ_threshold < 1.0))
      throw InvalidSpec("occ_threshold must lie in (0,1)");
    values_.assign(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), 0.0f);
  }

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Vec3i& dims() const { return dims_; }
  double occ_threshold() const { return occ_threshold_; }
  std::span<const float> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  Vec3 upper_bound() const { return origin_ + dims_.cast<double>() * resolution_; }

  Vec3i to_index(const Vec3& p) const {
    const Vec3 rel = (p - origin_) / resolution_;
    return Vec3i(static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
                 static_cast<int>(std::floor(rel.z())));
  }
  Vec3 voxel_min(const Vec3i& idx) const { return origin_ + idx.cast<double>() * resolution_; }
  Vec3 voxel_center(const Vec3i& idx) const {
    return origin_ + (idx.cast<double>().array() + 0.5).matrix() * resolution_;
  }

  bool in_bounds(const Vec3i& idx) const {
    return (idx.array() >= 0).all() && (idx.array() < dims_.array()).all();
  }
  bool in_bounds(const Vec3& p) const { return in_bounds(to_index(p)); }

  std::size_t linear(const Vec3i& idx) const {
    return (static_cast<std::size_t>(idx.z()) * dims_.y() + idx.y()) * dims_.x() + idx.x();
  }

  float value(const Vec3i& idx) const { return values_[linear(idx)]; }
  void set_value(const Vec3i& idx, float v) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InvalidSpec("occupancy value outside [0,1]");
    values_[linear(idx)] = v;
  }
  void set_occupied(const Vec3i& idx) { values_[linear(idx)] = 1.0f; }

  bool occupied(const Vec3i& idx) const {
    return !in_bounds(idx) || values_[linear(idx)] >= occ_threshold_;
  }

  std::size_t count_occupied() const {
    return static_cast<std::size_t>(std::count_if(
        values_.begin(), values_.end(), [&](float v) { return v >= occ_threshold_; }));
  }

  /// Raw mutable access for rasterizers; callers keep values in [0,1].
  std::vector<float>& mutable_values() { return values_; }

 private:
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 0.1;
  Vec3i dims_ = Vec3i::Ones();
  double occ_threshold_ = 0.5;
  std::vector<float> values_ = std::vector<float>(1, 0.0f);
};

inline bool is_occupied(const OccupancyGrid& grid, const Vec3& p) {
  return grid.occupied(grid.to_index(p));
}

namespace detail {

// Visits every voxel a segment touches, including both neighbours when the
// segment passes exactly through a voxel edge or corner. `visit` returns
// false to stop early; the function returns false in that case.
template <typename Visit>
bool supercover_traverse(const OccupancyGrid& grid, const Vec3& a, const Vec3& b, Visit&& visit) {
  constexpr double kTieEps = 1e-9;
  Vec3i idx = grid.to_index(a);
  const Vec3i last = grid.to_index(b);
  if (!visit(idx)) return false;
  if (idx == last) return true;

  const Vec3 d = b - a;
  Vec3i step;
  Vec3 t_max, t_delta;
  for (int k = 0; k < 3; ++k) {
    if (d[k] > 0.0) {
      step[k] = 1;
      const double boundary = grid.origin()[k] + (idx[k] + 1) * grid.resolution();
      t_max[k] = (boundary - a[k]) / d[k];
      t_delta[k] = grid.resolution() / d[k];
    } else if (d[k] < 0.0) {
      step[k] = -1;
      const double boundary = grid.origin()[k] + idx[k] * grid.resolution();
      t_max[k] = (boundary - a[k]) / d[k];
      t_delta[k] = -grid.resolution() / d[k];
    } else {
      step[k] = 0;
      t_max[k] = std::numeric_limits<double>::infinity();
      t_delta[k] = std::numeric_limits<double>::infinity();
    }
  }

  // Upper bound on steps guards against pathological floating behaviour.
  const int max_steps = (last - idx).cwiseAbs().sum() + 3;
  for (int iter = 0; iter < max_steps * 2 && idx != last; ++iter) {
    const double t_min = t_max.minCoeff();
    if (t_min > 1.0 + kTieEps) break;
    std::array<int, 3> axes{};
    int n_axes = 0;
    for (int k = 0; k < 3; ++k)
      if (t_max[k] <= t_min + kTieEps) axes[n_axes++] = k;
    if (n_axes > 1) {
      // Edge/corner crossing: visit every partial step before the full one.
      for (int mask = 1; mask < (1 << n_axes) - 1; ++mask) {
        Vec3i side = idx;
        for (int j = 0; j < n_axes; ++j)
          if (mask & (1 << j)) side[axes[j]] += step[axes[j]];
        if (!visit(side)) return false;
      }
    }
    for (int j = 0; j < n_axes; ++j) {
      idx[axes[j]] += step[axes[j]];
      t_max[axes[j]] += t_delta[axes[j]];
    }
    if (!visit(idx)) return false;
  }
  if (idx != last) return visit(last);
  return true;
}

}  // namespace detail

/// True when no voxel touched by the segment a-b is occupied. Endpoints are
/// put in a canonical order first so the answer is symmetric.
inline bool line_of_sight(const OccupancyGrid& grid, const Vec3& a, const Vec3& b) {
  const bool swap = std::lexicographical_compare(b.data(), b.data() + 3, a.data(), a.data() + 3);
  const Vec3& from = swap ? b : a;
  const Vec3& to = swap ? a : b;
  return detail::supercover_traverse(grid, from, to,
                                     [&](const Vec3i& idx) { return !grid.occupied(idx); });
}

/// Voxels that a segment touches (supercover order). Mostly for tests/tools.
inline std::vector<Vec3i> traversed_voxels(const OccupancyGrid& grid, const Vec3& a, const Vec3& b) {
  std::vector<Vec3i> out;
  detail::supercover_traverse(grid, a, b, [&](const Vec3i& idx) {
    out.push_back(idx);
    return true;
  });
  return out;
}

/// Index-space box [lo, hi] (inclusive).
struct VoxelBox {
  Vec3i lo;
  Vec3i hi;
};

inline bool voxel_box_free(const OccupancyGrid& grid, const VoxelBox& box) {
  for (int z = box.lo.z(); z <= box.hi.z(); ++z)
    for (int y = box.lo.y(); y <= box.hi.y(); ++y)
      for (int x = box.lo.x(); x <= box.hi.x(); ++x)
        if (grid.occupied(Vec3i(x, y, z))) return false;
  return true;
}

/// Grows a free box around `seed`, one voxel layer at a time in the order
/// +x,-x,+y,-y,+z,-z, until every face is blocked, hits the map bound, or
/// reaches `max_extent` metres from the seed voxel centre. The returned cube
/// is additionally clipped to max_extent around that centre.
inline Cube inflate_box(const OccupancyGrid& grid, const Vec3& seed, double max_extent) {
  const Vec3i s = grid.to_index(seed);
  if (grid.occupied(s)) throw SeedOccupied("inflate_box seed lies in an occupied voxel");
  const double res = grid.resolution();
  const int max_steps = std::max(0, static_cast<int>(std::ceil(max_extent / res - 0.5 - 1e-9)));

  VoxelBox box{s, s};
  std::array<bool, 6> active;
  active.fill(true);
  bool any = true;
  while (any) {
    any = false;
    for (int dir = 0; dir < 6; ++dir) {
      if (!active[dir]) continue;
      const int axis = dir / 2;
      const bool positive = (dir % 2) == 0;
      VoxelBox slab = box;
      if (positive) {
        if (box.hi[axis] - s[axis] >= max_steps) { active[dir] = false; continue; }
        slab.lo[axis] = slab.hi[axis] = box.hi[axis] + 1;
      } else {
        if (s[axis] - box.lo[axis] >= max_steps) { active[dir] = false; continue; }
        slab.lo[axis] = slab.hi[axis] = box.lo[axis] - 1;
      }
      if (!voxel_box_free(grid, slab)) { active[dir] = false; continue; }
      if (positive) ++box.hi[axis]; else --box.lo[axis];
      any = true;
    }
  }

  Cube cube{grid.voxel_min(box.lo), grid.voxel_min(box.hi) + Vec3::Constant(res)};
  const Vec3 c = grid.voxel_center(s);
  cube.min_corner = cube.min_corner.cwiseMax(c - Vec3::Constant(max_extent));
  cube.max_corner = cube.max_corner.cwiseMin(c + Vec3::Constant(max_extent));
  return cube;
}

/// Voxel index range overlapping the open interior of a cube.
inline VoxelBox voxels_overlapping(const OccupancyGrid& grid, const Cube& cube) {
  const double res = grid.resolution();
  VoxelBox box;
  for (int k = 0; k < 3; ++k) {
    const double lo = (cube.min_corner[k] - grid.origin()[k]) / res;
    const double hi = (cube.max_corner[k] - grid.origin()[k]) / res;
    box.lo[k] = static_cast<int>(std::floor(lo + 1e-9));
    box.hi[k] = static_cast<int>(std::ceil(hi - 1e-9)) - 1;
    if (box.hi[k] < box.lo[k]) box.hi[k] = box.lo[k];
  }
  return box;
}

/// Exhaustive check that no voxel overlapping the cube interior is occupied.
inline bool cube_is_free(const OccupancyGrid& grid, const Cube& cube) {
  return voxel_box_free(grid, voxels_overlapping(grid, cube));
}

/// Returns a copy where every voxel within `radius` (Chebyshev, per axis in
/// whole voxels) of an occupied voxel is occupied. Used to give the planner a
/// safety margin for the vehicle's size.
inline OccupancyGrid dilate(const OccupancyGrid& grid, double radius) {
  const int r = static_cast<int>(std::ceil(radius / grid.resolution() - 1e-9));
  OccupancyGrid out = grid;
  if (r <= 0) return out;
  const Vec3i dims = grid.dims();
  const float thr = static_cast<float>(grid.occ_threshold());
  std::vector<float>& v = out.mutable_values();
  std::vector<std::uint8_t> occ(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) occ[i] = v[i] >= thr;

  // Separable max filter: one pass per axis using distance-to-nearest.
  std::vector<int> dist;
  for (int axis = 0; axis < 3; ++axis) {
    const int n = dims[axis];
    const std::size_t stride =
        axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.x())
                                   : static_cast<std::size_t>(dims.x()) * dims.y());
    std::vector<std::uint8_t> next = occ;
    dist.assign(n, 0);
    const int o1 = (axis + 1) % 3, o2 = (axis + 2) % 3;
    Vec3i idx = Vec3i::Zero();
    for (int a = 0; a < dims[o1]; ++a) {
      for (int b = 0; b < dims[o2]; ++b) {
        idx[axis] = 0;
        idx[o1] = a;
        idx[o2] = b;
        const std::size_t base = grid.linear(idx);
        int last = -1000000;
        for (int i = 0; i < n; ++i) {
          if (occ[base + i * stride]) last = i;
          dist[i] = i - last;
        }
        last = 1000000;
        for (int i = n - 1; i >= 0; --i) {
          if (occ[base + i * stride]) last = i;
          if (std::min(dist[i], last - i) <= r) next[base + i * stride] = 1;
        }
      }
    }
    occ.swap(next);
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    if (occ[i]) v[i] = 1.0f;
  return out;
}

}  // namespace aerotrack
