#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aerotrack/common.hpp"
#include "aerotrack/grid_world.hpp"
#include "aerotrack/kino_search.hpp"

namespace aerotrack {

struct Corridor {
  std::vector<Cube> cubes;
};

struct CorridorOptions {
  double max_extent = 2.0;  ///< cube side limit (m)
  /// Minimum side of consecutive intersections, in voxels.
  double min_overlap_voxels = 2.0;
};

/// Positions along a path at roughly `spacing`, first and last included.
inline std::vector<Vec3> path_samples(const KinoPath& path, double spacing) {
  std::vector<Vec3> out;
  if (path.primitives.empty()) {
    out.push_back(path.end_state.p);
    return out;
  }
  out.push_back(path.primitives.front().start.p);
  for (const auto& prim : path.primitives) {
    const double length = prim.start.v.norm() * prim.tau + 0.5 * prim.u.norm() * prim.tau * prim.tau;
    const int n = std::max(1, static_cast<int>(std::ceil(length / spacing)));
    for (int i = 1; i <= n; ++i) {
      const double t = prim.tau * i / n;
      out.push_back(prim.start.p + prim.start.v * t + 0.5 * prim.u * t * t);
    }
  }
  return out;
}

inline bool fat_intersection(const Cube& a, const Cube& b, double min_side) {
  const auto c = cube_intersection(a, b);
  return c && c->size().minCoeff() >= min_side - 1e-9;
}

/// Chain of free axis-aligned cubes covering the path. A new cube is seeded
/// at the first sample leaving the last cube; when its overlap with the last
/// cube is too thin, cubes seeded between the two samples are inserted
/// (bisecting on the sample index).
inline Corridor build_corridor(const std::vector<Vec3>& samples, const OccupancyGrid& grid,
                               const CorridorOptions& opt = {}) {
  if (samples.empty()) throw CorridorFailed("empty path");
  const double half = 0.5 * opt.max_extent;
  const double min_side = opt.min_overlap_voxels * grid.resolution();
  auto inflate = [&](std::size_t i) {
    try {
      return inflate_box(grid, samples[i], half);
    } catch (const SeedOccupied&) {
      throw CorridorFailed("path sample " + std::to_string(i) + " lies in an occupied voxel");
    }
  };

  Corridor corridor;
  std::vector<std::size_t> seeds;  // sample index each cube was grown from
  corridor.cubes.push_back(inflate(0));
  seeds.push_back(0);

  auto push = [&](const Cube& c, std::size_t i) {
    corridor.cubes.push_back(c);
    seeds.push_back(i);
  };
  // Extend the chain until it reaches sample j; samples[lo] lies in the
  // last cube.
  auto link = [&](auto&& self, std::size_t lo, std::size_t j, int depth) -> void {
    if (depth > 128) throw CorridorFailed("corridor bisection did not converge");
    const Cube next = inflate(j);
    if (fat_intersection(corridor.cubes.back(), next, min_side)) {
      if (!corridor.cubes.back().contains(next)) push(next, j);
      return;
    }
    const std::size_t mid = (lo + j) / 2;
    if (mid == lo)
      throw CorridorFailed("no fat overlap between cubes near samples " + std::to_string(lo) + " and " +
                           std::to_string(j));
    const Cube m = inflate(mid);
    if (corridor.cubes.back().contains(m)) {
      self(self, mid, j, depth + 1);
      return;
    }
    if (fat_intersection(corridor.cubes.back(), m, min_side)) {
      push(m, mid);
    } else {
      self(self, lo, mid, depth + 1);
    }
    if (!corridor.cubes.back().contains(samples[j])) self(self, mid, j, depth + 1);
  };

  for (std::size_t j = 1; j < samples.size(); ++j) {
    if (corridor.cubes.back().contains(samples[j])) continue;
    link(link, seeds.back(), j, 0);
  }
  return corridor;
}

inline Corridor build_corridor(const KinoPath& path, const OccupancyGrid& grid, const CorridorOptions& opt = {}) {
  return build_corridor(path_samples(path, 0.5 * grid.resolution()), grid, opt);
}

}  // namespace aerotrack
