#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include "lanemap/clustering.hpp"
#include "lanemap/polygon.hpp"

using namespace lanemap;

namespace {

RasterGrid grid(double x0, double y0, int w, int h) { return {{x0, y0}, 0.1, w, h}; }

// Two hits at the center of every cell whose center lies inside a polygon.
RasterImage raster_of(const RasterGrid& g, const std::vector<Polygon>& polys) {
  std::vector<CloudPoint> cloud;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point2 c = g.center(g.cell_at(i));
    for (const Polygon& p : polys) {
      if (point_in_polygon(p, c)) {
        cloud.push_back({{c.x, c.y, 0.0}, 150.0, 0});
        cloud.push_back({{c.x, c.y, 0.0}, 150.0, 1});
        break;
      }
    }
  }
  return rasterize(cloud, g, 2);
}

Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

Polygon arrow(double x0, double yc) {
  static constexpr Point2 shape[] = {{0.0, -0.075}, {3.0, -0.075}, {3.0, -0.45}, {4.2, 0.0},
                                     {3.0, 0.45},   {3.0, 0.075},  {0.0, 0.075}};
  Polygon p;
  for (Point2 q : shape) p.push_back({x0 + q.x, yc + q.y});
  return p;
}

TrajectoryField east() {
  std::vector<PoseRecord> poses;
  for (int i = 0; i < 30; ++i) {
    PoseRecord r;
    r.frame_id = i;
    r.pose.position = {-10.0 + 2.0 * i, -1.75, 1.8};
    poses.push_back(r);
  }
  return TrajectoryField(poses);
}

const DrivingFrame kEast{UnitVector2::from(1, 0), UnitVector2::from(0, 1)};

// Components by union-find over the same adjacency, labelled by smallest cell.
std::vector<std::vector<std::size_t>> oracle_components(const RasterImage& img, int k, std::size_t min_cells) {
  const RasterGrid& g = img.grid;
  std::vector<std::size_t> parent(g.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  const int r = k / 2;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!img.occupied(i)) continue;
    const Cell c = g.cell_at(i);
    for (int dr = -r; dr <= r; ++dr) {
      for (int dc = -r; dc <= r; ++dc) {
        const Cell n{c.col + dc, c.row + dr};
        if (!img.occupied(n)) continue;
        const std::size_t a = find(i), b = find(g.index(n));
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (img.occupied(i)) groups[find(i)].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, cells] : groups) {
    if (cells.size() >= min_cells) out.push_back(cells);
  }
  return out;
}

}  // namespace

TEST(PreCluster, SeparationVersusReach) {
  const RasterGrid g = grid(0, 0, 60, 20);
  const RasterImage img = raster_of(g, {rect(0.5, 0.5, 1.0, 1.0), rect(1.9, 0.5, 2.5, 1.0)});
  EXPECT_EQ(pre_cluster_bfs(img, {3, 4}).size(), 2u);
  EXPECT_EQ(pre_cluster_bfs(img, {21, 4}).size(), 1u);
}

TEST(PreCluster, SmallComponentsAreNoise) {
  const RasterGrid g = grid(0, 0, 40, 10);
  const RasterImage img = raster_of(g, {rect(0.5, 0.5, 0.6, 0.7), rect(2.0, 0.5, 2.5, 0.7)});
  const auto c = pre_cluster_bfs(img);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].cells.size(), 10u);
  EXPECT_EQ(c[0].point_count, 20u);
}

TEST(PreCluster, MatchesUnionFindOracle) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 20; ++rep) {
    const RasterGrid g = grid(0, 0, 50, 40);
    std::vector<CloudPoint> cloud;
    std::bernoulli_distribution on(0.2 + 0.02 * rep);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!on(gen)) continue;
      const Point2 c = g.center(g.cell_at(i));
      cloud.push_back({{c.x, c.y, 0}, 100, 0});
      cloud.push_back({{c.x, c.y, 0}, 100, 0});
    }
    const RasterImage img = rasterize(cloud, g, 2);
    for (int k : {3, 5}) {
      const auto got = pre_cluster_bfs(img, {k, 4});
      const auto want = oracle_components(img, k, 4);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].id, static_cast<int>(i));
        EXPECT_EQ(got[i].cells, want[i]);
      }
    }
  }
}

TEST(PreCluster, FootprintMbr) {
  const RasterGrid g = grid(0, 0, 40, 10);
  const auto c = pre_cluster_bfs(raster_of(g, {rect(0.5, 0.5, 2.5, 0.7)}));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].mbr.length(), 2.0, 1e-9);
  EXPECT_NEAR(c[0].mbr.width(), 0.2, 1e-9);
}

TEST(DeviationRatio, Examples) {
  EXPECT_DOUBLE_EQ(deviation_ratio({2.0, 0.5}, {0, 0}, kEast), 0.25);
  EXPECT_DOUBLE_EQ(deviation_ratio({-3.0, 0.0}, {0, 0}, kEast), 0.0);
  EXPECT_TRUE(std::isinf(deviation_ratio({0.0, 0.3}, {0, 0}, kEast)));
  const DrivingFrame rotated{UnitVector2::from(0, 1), UnitVector2::from(-1, 0)};
  EXPECT_NEAR(deviation_ratio({0.5, 2.0}, {0, 0}, rotated), 0.25, 1e-15);
}

TEST(Kernel, Examples) {
  EXPECT_NEAR(gaussian_kernel(0.0, 1.0), 0.39894, 5e-6);
  EXPECT_NEAR(gaussian_kernel(1.0, 1.0), 0.24197, 5e-6);
  EXPECT_EQ(gaussian_kernel(std::numeric_limits<double>::infinity(), 1.0), 0.0);
}

TEST(Kernel, DecreasingInDeviation) {
  for (double sigma : {0.1, 0.5, 2.0}) {
    double prev = gaussian_kernel(0.0, sigma);
    for (double p = 0.01; p < 20.0 * sigma; p += 0.01) {
      const double d = gaussian_kernel(p, sigma);
      EXPECT_LT(d, prev);
      EXPECT_EQ(d, gaussian_kernel(-p, sigma));
      prev = d;
    }
  }
}

TEST(Membership, AlignedPointsGiveKernelPeak) {
  const std::vector<Point2> m{{0, 0}, {0.4, 0}, {0.8, 0}};
  const PointIndex index(m, 1.5);
  auto frame = [](Point2) { return kEast; };
  const auto r = membership_probability({1.2, 0.0}, index, frame, [](std::size_t) { return 1.0; }, ReclusterParams{});
  ASSERT_TRUE(r);
  EXPECT_NEAR(r->density, 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
  EXPECT_EQ(r->nearest, 2u);
  EXPECT_EQ(r->members.size(), 3u);
}

TEST(Membership, OneSigmaPoint) {
  const std::vector<Point2> m{{0, 0}};
  const PointIndex index(m, 1.5);
  auto frame = [](Point2) { return kEast; };
  const auto r = membership_probability({1.0, 1.0}, index, frame, [](std::size_t) { return 1.0; }, ReclusterParams{});
  ASSERT_TRUE(r);
  EXPECT_NEAR(r->density, 0.24197, 5e-6);
}

TEST(Membership, HandComputedFixture) {
  const std::vector<Point2> m{{0, 0}, {0.5, 0.05}, {1.0, -0.05}, {1.3, 0.1}, {0.2, 0.4}};
  const Point2 n{1.8, 0.15};
  const ReclusterParams params;
  const PointIndex index(m, params.radius);
  auto frame = [](Point2) { return kEast; };
  const auto r = membership_probability(n, index, frame, params);
  ASSERT_TRUE(r);

  // Nearest m-point is m[3]; all five lie within 1.5 m of it.
  EXPECT_EQ(r->nearest, 3u);
  ASSERT_EQ(r->members.size(), 5u);
  auto ratio = [](Point2 a, Point2 b) { return std::abs((a.y - b.y) / (a.x - b.x)); };
  double density = 0.0, threshold = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    double sum = 0.0;
    int w = 0;
    for (std::size_t q = 0; q < 5; ++q) {
      if (q == j || distance(m[q], m[j]) > 1.5) continue;
      sum += ratio(m[q], m[j]) * ratio(m[q], m[j]);
      ++w;
    }
    const double sigma = w < 2 ? 0.1 : std::max(0.1, std::sqrt(sum / (w - 1)));
    const double p = ratio(n, m[j]);
    density += std::exp(-p * p / (2 * sigma * sigma)) / (std::sqrt(2 * std::numbers::pi) * sigma) / 5.0;
    threshold += 0.5 / (std::sqrt(2 * std::numbers::pi) * sigma) / 5.0;
  }
  EXPECT_NEAR(r->density, density, 1e-12);
  EXPECT_NEAR(r->threshold, threshold, 1e-12);
}

TEST(Membership, FarPointIsNotAdjacent) {
  const std::vector<Point2> m{{0, 0}, {0.5, 0}};
  const PointIndex index(m, 1.5);
  auto frame = [](Point2) { return kEast; };
  EXPECT_FALSE(membership_probability({2.1, 0.0}, index, frame, ReclusterParams{}).has_value());
}

TEST(ReCluster, SplitDashMerges) {
  const RasterGrid g = grid(-1, -1, 100, 20);
  const RasterImage img = raster_of(g, {rect(0.0, -0.075, 3.0, 0.075), rect(3.3, -0.075, 6.0, 0.075)});
  const auto pre = pre_cluster_bfs(img);
  ASSERT_EQ(pre.size(), 2u);
  const auto merged = re_cluster(pre, img, east());
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].id, 0);
  EXPECT_EQ(merged[0].cells.size(), pre[0].cells.size() + pre[1].cells.size());
  EXPECT_NEAR(merged[0].mbr.length(), 6.0, 0.11);
}

TEST(ReCluster, DashAndOffsetArrowStaySeparate) {
  const RasterGrid g = grid(-1, -2, 100, 40);
  const RasterImage img = raster_of(g, {rect(0.0, -0.075, 2.0, 0.075), arrow(2.3, 0.5)});
  const auto pre = pre_cluster_bfs(img);
  ASSERT_EQ(pre.size(), 2u);
  EXPECT_EQ(re_cluster(pre, img, east()).size(), 2u);
}

TEST(ReCluster, LaterallyAdjacentLinesStaySeparate) {
  const RasterGrid g = grid(-1, -2, 100, 40);
  const RasterImage img = raster_of(g, {rect(0.0, -0.075, 6.0, 0.075), rect(0.0, 0.425, 6.0, 0.575)});
  const auto pre = pre_cluster_bfs(img);
  ASSERT_EQ(pre.size(), 2u);
  EXPECT_EQ(re_cluster(pre, img, east()).size(), 2u);
}

TEST(ReCluster, SingleClusterUnchanged) {
  const RasterGrid g = grid(-1, -1, 40, 20);
  const RasterImage img = raster_of(g, {rect(0.0, -0.075, 2.0, 0.075)});
  const auto pre = pre_cluster_bfs(img);
  const auto out = re_cluster(pre, img, east());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].cells, pre[0].cells);
}

TEST(ReCluster, CoarseningAndOrderIndependence) {
  // A worn line broken into pieces plus an unrelated parallel line.
  const RasterGrid g = grid(-1, -2, 200, 40);
  std::vector<Polygon> polys;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> gap(0.2, 0.5);
  double x = 0.0;
  while (x < 15.0) {
    const double len = 1.0 + gap(gen) * 3;
    polys.push_back(rect(x, -0.075, x + len, 0.075));
    x += len + gap(gen);
  }
  polys.push_back(rect(0.0, 1.0, 2.0, 1.15));
  const RasterImage img = raster_of(g, polys);
  const auto pre = pre_cluster_bfs(img);
  ASSERT_GE(pre.size(), 5u);
  const auto out = re_cluster(pre, img, east());
  EXPECT_EQ(out.size(), 2u);
  for (const MarkCluster& o : out) {
    for (const MarkCluster& p : pre) {
      const bool any = std::any_of(p.cells.begin(), p.cells.end(), [&](std::size_t c) {
        return std::binary_search(o.cells.begin(), o.cells.end(), c);
      });
      const bool all = std::all_of(p.cells.begin(), p.cells.end(), [&](std::size_t c) {
        return std::binary_search(o.cells.begin(), o.cells.end(), c);
      });
      EXPECT_EQ(any, all);
    }
  }
  auto shuffled = pre;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  const auto again = re_cluster(shuffled, img, east());
  ASSERT_EQ(again.size(), out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(again[i].id, out[i].id);
    EXPECT_EQ(again[i].cells, out[i].cells);
  }
}
