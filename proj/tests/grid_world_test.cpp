#include "aerotrack/grid_world.hpp"
#include "aerotrack/map_spec.hpp"

#include <gtest/gtest.h>

namespace aerotrack {
namespace {

OccupancyGrid EmptyGrid(int n = 10, double res = 0.1) {
  return OccupancyGrid(Vec3::Zero(), res, Vec3i(n, n, n));
}

// Solid wall occupying voxel layer x == wall_x.
OccupancyGrid WallGrid(int wall_x) {
  OccupancyGrid g = EmptyGrid(20);
  for (int z = 0; z < 20; ++z)
    for (int y = 0; y < 20; ++y) g.set_occupied(Vec3i(wall_x, y, z));
  return g;
}

bool SampledSegmentFree(const OccupancyGrid& g, const Vec3& a, const Vec3& b, int samples) {
  for (int i = 0; i <= samples; ++i) {
    const double s = static_cast<double>(i) / samples;
    if (is_occupied(g, a + s * (b - a))) return false;
  }
  return true;
}

TEST(OccupancyGridTest, EmptyGridIsFreeInBounds) {
  const auto g = EmptyGrid();
  EXPECT_FALSE(is_occupied(g, Vec3(0.05, 0.5, 0.99)));
  EXPECT_FALSE(is_occupied(g, Vec3(0.55, 0.55, 0.55)));
}

TEST(OccupancyGridTest, OutOfBoundsIsOccupied) {
  const auto g = EmptyGrid();
  EXPECT_TRUE(is_occupied(g, Vec3(-0.01, 0.5, 0.5)));
  EXPECT_TRUE(is_occupied(g, Vec3(0.5, 1.01, 0.5)));
  EXPECT_TRUE(is_occupied(g, Vec3(0.5, 0.5, 7.0)));
}

TEST(OccupancyGridTest, SingleVoxelLookup) {
  auto g = EmptyGrid();
  g.set_value(Vec3i(5, 5, 5), 1.0f);
  EXPECT_TRUE(is_occupied(g, g.origin() + Vec3(0.55, 0.55, 0.55)));
  EXPECT_FALSE(is_occupied(g, g.origin() + Vec3(0.45, 0.55, 0.55)));
}

TEST(OccupancyGridTest, ThresholdIsInclusive) {
  auto g = EmptyGrid();
  g.set_value(Vec3i(1, 1, 1), 0.5f);
  g.set_value(Vec3i(2, 1, 1), 0.49f);
  EXPECT_TRUE(g.occupied(Vec3i(1, 1, 1)));
  EXPECT_FALSE(g.occupied(Vec3i(2, 1, 1)));
  EXPECT_THROW(g.set_value(Vec3i(0, 0, 0), 1.5f), InvalidSpec);
}

TEST(LineOfSightTest, EmptyAndDegenerate) {
  const auto g = EmptyGrid();
  EXPECT_TRUE(line_of_sight(g, Vec3(0.05, 0.05, 0.05), Vec3(0.95, 0.95, 0.95)));
  EXPECT_TRUE(line_of_sight(g, Vec3(0.33, 0.21, 0.7), Vec3(0.33, 0.21, 0.7)));
}

TEST(LineOfSightTest, WallBlocks) {
  const auto g = WallGrid(10);
  const Vec3 a(0.3, 0.9, 1.1), b(1.7, 1.3, 0.8);
  EXPECT_FALSE(SampledSegmentFree(g, a, b, 1000));
  EXPECT_FALSE(line_of_sight(g, a, b));
  EXPECT_FALSE(line_of_sight(g, b, a));
  EXPECT_TRUE(line_of_sight(g, Vec3(0.1, 0.1, 0.1), Vec3(0.9, 1.9, 1.5)));
}

TEST(LineOfSightTest, DiagonalCornerDoesNotLeak) {
  // Two voxels touching at an edge; a segment through that exact edge
  // must see both.
  auto g = EmptyGrid();
  g.set_occupied(Vec3i(5, 4, 5));
  g.set_occupied(Vec3i(4, 5, 5));
  EXPECT_FALSE(line_of_sight(g, Vec3(0.35, 0.35, 0.55), Vec3(0.65, 0.65, 0.55)));
}

// Property: symmetric and sound on random cluttered grids.
TEST(LineOfSightTest, RandomSymmetryAndSoundness) {
  Rng rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.999);
  std::bernoulli_distribution occ(0.03);
  OccupancyGrid g(Vec3::Zero(), 0.1, Vec3i(20, 20, 20));
  for (int z = 0; z < 20; ++z)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x)
        if (occ(rng)) g.set_occupied(Vec3i(x, y, z));
  int visible = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    const bool ab = line_of_sight(g, a, b);
    ASSERT_EQ(ab, line_of_sight(g, b, a));
    if (ab) {
      ++visible;
      const int samples = static_cast<int>(std::ceil((b - a).norm() / (0.25 * 0.1))) + 1;
      ASSERT_TRUE(SampledSegmentFree(g, a, b, samples));
    }
  }
  EXPECT_GT(visible, 100);
}

TEST(InflateBoxTest, EmptyGridCentered) {
  OccupancyGrid g(Vec3::Zero(), 0.1, Vec3i(60, 60, 60));
  const Vec3 seed(3.03, 3.04, 3.02);
  const Cube c = inflate_box(g, seed, 1.0);
  const Vec3 center = g.voxel_center(g.to_index(seed));
  EXPECT_NEAR((c.size() - Vec3::Constant(2.0)).cwiseAbs().maxCoeff(), 0.0, 1e-9);
  EXPECT_NEAR((c.center() - center).norm(), 0.0, 1e-9);
}

TEST(InflateBoxTest, ClampedToGridBounds) {
  const auto g = EmptyGrid();
  const Cube c = inflate_box(g, Vec3(0.15, 0.5, 0.5), 1.0);
  EXPECT_NEAR(c.min_corner.x(), 0.0, 1e-12);
  EXPECT_NEAR(c.max_corner.x(), 1.0, 1e-12);
}

TEST(InflateBoxTest, FlushWithWall) {
  const auto g = WallGrid(10);
  const Vec3 seed(0.85, 1.0, 1.0);
  const Cube c = inflate_box(g, seed, 2.0);
  EXPECT_NEAR(c.max_corner.x(), 1.0, 1e-12);
  EXPECT_TRUE(cube_is_free(g, c));
  Cube grown = c;
  grown.max_corner.x() += 0.1;
  EXPECT_FALSE(cube_is_free(g, grown));
}

TEST(InflateBoxTest, OneVoxelCorridor) {
  // Solid block with a 1-voxel tunnel along x at (y=10, z=10).
  OccupancyGrid g(Vec3::Zero(), 0.1, Vec3i(20, 20, 20));
  for (int z = 0; z < 20; ++z)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x)
        if (!(y == 10 && z == 10)) g.set_occupied(Vec3i(x, y, z));
  const Cube c = inflate_box(g, Vec3(1.05, 1.05, 1.05), 5.0);
  EXPECT_NEAR(c.size().y(), 0.1, 1e-12);
  EXPECT_NEAR(c.size().z(), 0.1, 1e-12);
  EXPECT_NEAR(c.size().x(), 2.0, 1e-12);
  EXPECT_TRUE(cube_is_free(g, c));
}

TEST(InflateBoxTest, SeedOccupiedThrows) {
  const auto g = WallGrid(10);
  EXPECT_THROW(inflate_box(g, Vec3(1.05, 1.0, 1.0), 1.0), SeedOccupied);
}

TEST(InflateBoxTest, RandomOutputsAreFreeAndMaximal) {
  Rng rng(7);
  std::bernoulli_distribution occ(0.02);
  OccupancyGrid g(Vec3::Zero(), 0.1, Vec3i(30, 30, 30));
  for (int z = 0; z < 30; ++z)
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 30; ++x)
        if (occ(rng)) g.set_occupied(Vec3i(x, y, z));
  std::uniform_real_distribution<double> u(0.0, 2.999);
  int tested = 0;
  while (tested < 200) {
    const Vec3 seed(u(rng), u(rng), u(rng));
    if (is_occupied(g, seed)) continue;
    const Cube c = inflate_box(g, seed, 10.0);
    ASSERT_TRUE(cube_is_free(g, c));
    ASSERT_TRUE(c.contains(seed));
    // Maximal: growing any face by a voxel hits an obstacle or the bound.
    for (int dir = 0; dir < 6; ++dir) {
      Cube grown = c;
      if (dir % 2 == 0) grown.max_corner[dir / 2] += 0.1;
      else grown.min_corner[dir / 2] -= 0.1;
      ASSERT_FALSE(cube_is_free(g, grown)) << "dir " << dir;
    }
    ++tested;
  }
}

TEST(CubeIntersectionTest, Basics) {
  const Cube a{Vec3::Zero(), Vec3::Ones()};
  EXPECT_EQ(*cube_intersection(a, a), a);
  const Cube far{Vec3::Constant(2.0), Vec3::Constant(3.0)};
  EXPECT_FALSE(cube_intersection(a, far).has_value());
  const Cube shifted{Vec3(0.5, 0, 0), Vec3(1.5, 1, 1)};
  const auto i = cube_intersection(a, shifted);
  ASSERT_TRUE(i.has_value());
  EXPECT_NEAR((i->size() - Vec3(0.5, 1, 1)).norm(), 0.0, 1e-12);
}

TEST(DilateTest, GrowsByRadius) {
  auto g = EmptyGrid(20);
  g.set_occupied(Vec3i(10, 10, 10));
  const auto d = dilate(g, 0.2);
  EXPECT_TRUE(d.occupied(Vec3i(12, 8, 10)));
  EXPECT_FALSE(d.occupied(Vec3i(13, 10, 10)));
  EXPECT_EQ(d.count_occupied(), 125u);
}

MapSpec ForestSpec(std::uint64_t seed) {
  MapSpec s;
  s.origin = Vec3::Zero();
  s.resolution = 0.1;
  s.dims = Vec3i(300, 300, 10);
  s.seed = seed;
  ForestObstacle f;
  f.density = 0.02;
  f.radius = 1.0;
  f.height = 1.0;
  f.region_min = Eigen::Vector2d(0, 0);
  f.region_max = Eigen::Vector2d(30, 30);
  s.obstacles.emplace_back(f);
  return s;
}

TEST(BuildMapTest, NoObstaclesIsFree) {
  MapSpec s;
  s.dims = Vec3i(20, 20, 5);
  EXPECT_EQ(build_map(s).count_occupied(), 0u);
}

TEST(BuildMapTest, Deterministic) {
  const auto a = build_map(ForestSpec(3));
  const auto b = build_map(ForestSpec(3));
  ASSERT_EQ(a.size(), b.size());
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  const auto c = build_map(ForestSpec(4));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST(BuildMapTest, ForestFractionMatchesDensity) {
  const auto spec = ForestSpec(11);
  const auto g = build_map(spec);
  const double fraction = static_cast<double>(g.count_occupied()) / static_cast<double>(g.size());
  const double expected = 0.02 * M_PI * 1.0 * 1.0;
  EXPECT_NEAR(fraction, expected, 0.2 * expected);
}

TEST(MapSpecTest, ParsesAllObstacleTypes) {
  const auto j = nlohmann::json::parse(R"({
    "origin": [0, 0, 0], "resolution": 0.1, "dims": [50, 50, 20], "seed": 5,
    "obstacles": [
      {"type": "box", "min": [1, 1, 0], "max": [1.5, 2, 2]},
      {"type": "cylinder", "center": [3, 3], "radius": 0.4},
      {"type": "forest", "density": 0.1, "radius": 0.2, "region_min": [0, 3.5], "region_max": [5, 5],
       "keep_out": [[1, 4, 0.5]]}
    ]})");
  const MapSpec s = parse_map_spec(j);
  EXPECT_EQ(s.obstacles.size(), 3u);
  EXPECT_EQ(s.seed, 5u);
  const auto g = build_map(s);
  EXPECT_TRUE(is_occupied(g, Vec3(1.2, 1.5, 1.0)));
  EXPECT_TRUE(is_occupied(g, Vec3(3.0, 3.0, 1.0)));
  EXPECT_FALSE(is_occupied(g, Vec3(0.5, 0.5, 1.0)));
}

TEST(MapSpecTest, DiagnosticsNameTheField) {
  const auto j = nlohmann::json::parse(R"({
    "origin": [0, 0, 0], "resolution": 0.1, "dims": [50, 50, 20],
    "obstacles": [{"type": "box", "min": [0, 0, 0], "max": [1, 1, 1]},
                  {"type": "cylinder", "center": [3, 3], "radius": -1}]})");
  try {
    parse_map_spec(j);
    FAIL() << "expected InvalidSpec";
  } catch (const InvalidSpec& e) {
    EXPECT_NE(std::string(e.what()).find("map.obstacles[1].radius"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_map_spec(nlohmann::json::parse(R"({"origin":[0,0],"resolution":0.1,"dims":[1,1,1]})")),
               InvalidSpec);
}

TEST(MapSpecTest, SyntaxErrorReportsLine) {
  try {
    parse_json_text("{\n  \"origin\": [0,0,0],\n  \"resolution\": ,\n}", "m.json");
    FAIL() << "expected InvalidSpec";
  } catch (const InvalidSpec& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace aerotrack
