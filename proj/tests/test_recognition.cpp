#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <map>
#include <set>
#include <sstream>

#include "lanemap/polygon.hpp"
#include "lanemap/recognition.hpp"

using namespace lanemap;

namespace {

Mbr mbr(double length, double width, double angle = 0.0, Point2 c = {}) { return {c, 0.5 * length, 0.5 * width, angle}; }

Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

Polygon rotated_rect(Point2 c, double length, double width, double angle) {
  const UnitVector2 u = UnitVector2::from_angle(angle);
  auto at = [&](double l, double w) { return c + l * u.vec() + w * u.left_normal().vec(); };
  return {at(-length / 2, -width / 2), at(length / 2, -width / 2), at(length / 2, width / 2), at(-length / 2, width / 2)};
}

struct Fixture {
  RasterImage img;
  std::vector<std::vector<std::size_t>> truth;  ///< cells per polygon
};

// Occupies every cell whose center lies inside a polygon; optional jitter
// moves the two hits per cell off the center.
Fixture raster_of(const RasterGrid& g, const std::vector<Polygon>& polys) {
  Fixture f;
  f.truth.resize(polys.size());
  std::vector<CloudPoint> cloud;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point2 c = g.center(g.cell_at(i));
    for (std::size_t k = 0; k < polys.size(); ++k) {
      if (point_in_polygon(polys[k], c)) {
        cloud.push_back({{c.x, c.y, 0.0}, 150.0, 0});
        cloud.push_back({{c.x, c.y, 0.0}, 150.0, 1});
        f.truth[k].push_back(i);
        break;
      }
    }
  }
  f.img = rasterize(cloud, g, 2);
  return f;
}

TrajectoryField east() {
  std::vector<PoseRecord> poses;
  for (int i = 0; i < 40; ++i) {
    PoseRecord r;
    r.frame_id = i;
    r.pose.position = {-10.0 + 2.0 * i, -1.75, 1.8};
    poses.push_back(r);
  }
  return TrajectoryField(poses);
}

double fraction_recovered(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& got) {
  std::size_t hit = 0;
  for (std::size_t c : truth) hit += std::binary_search(got.begin(), got.end(), c);
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

TEST(ClassifyByMbr, Examples) {
  EXPECT_EQ(classify_by_mbr(mbr(2.0, 0.15)), ShapeClass::dashed);
  EXPECT_EQ(classify_by_mbr(mbr(45.0, 0.2)), ShapeClass::solid_candidate);
  EXPECT_EQ(classify_by_mbr(mbr(3.0, 1.2)), ShapeClass::other);
  EXPECT_EQ(classify_by_mbr(mbr(45.0, 2.0)), ShapeClass::solid_candidate);  // aspect 22.5
  EXPECT_EQ(classify_by_mbr(mbr(30.0, 6.0)), ShapeClass::other);
  EXPECT_EQ(classify_by_mbr(mbr(0.5, 0.1)), ShapeClass::other);
  EXPECT_EQ(classify_by_mbr(mbr(9.0, 0.15)), ShapeClass::other);
  EXPECT_EQ(classify_by_mbr(mbr(2.0, 0.0)), ShapeClass::other);
}

TEST(ClassifyByMbr, RigidInvariance) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ua(-3.0, 3.0), ut(-100, 100), ul(0.3, 50), uw(0.05, 3);
  for (int k = 0; k < 200; ++k) {
    Polygon pts = rotated_rect({0, 0}, ul(gen), uw(gen), 0.0);
    const double a = ua(gen);
    const Point2 t{ut(gen), ut(gen)};
    Polygon moved;
    for (Point2 p : pts) moved.push_back(Point2{p.x * std::cos(a) - p.y * std::sin(a), p.x * std::sin(a) + p.y * std::cos(a)} + t);
    EXPECT_EQ(classify_by_mbr(minimum_bounding_rectangle(pts)), classify_by_mbr(minimum_bounding_rectangle(moved)));
  }
}

TEST(DashFeature, AxisAlignedAndRotated) {
  for (double angle : {0.0, std::numbers::pi / 6}) {
    const RasterGrid g{{-3, -3}, 0.1, 60, 60};
    const Fixture f = raster_of(g, {rotated_rect({0.03, 0.02}, 2.0, 0.15, angle)});
    const auto clusters = pre_cluster_bfs(f.img);
    ASSERT_EQ(clusters.size(), 1u);
    const DashFeature d = dash_feature(clusters[0].centers);
    const double err = std::acos(abs_cos(d.direction, UnitVector2::from_angle(angle)));
    EXPECT_LT(err, 0.02) << angle;
    EXPECT_EQ(classify_by_mbr(clusters[0]), ShapeClass::dashed);
  }
}

TEST(DashFeature, NoisyRasterizedDash) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> noise(0.0, 0.03);
  std::uniform_real_distribution<double> ua(-0.3, 0.3), ul(-1, 1), uw(-0.075, 0.075);
  for (int rep = 0; rep < 20; ++rep) {
    const double angle = ua(gen);
    const UnitVector2 u = UnitVector2::from_angle(angle);
    std::vector<CloudPoint> cloud;
    for (int i = 0; i < 3000; ++i) {
      const Point2 p = ul(gen) * u.vec() + uw(gen) * u.left_normal().vec() + Point2{noise(gen), noise(gen)};
      cloud.push_back({{p.x, p.y, 0.0}, 170, 0});
    }
    const RasterImage img = rasterize(cloud);
    const auto clusters = pre_cluster_bfs(img);
    ASSERT_GE(clusters.size(), 1u);
    const auto largest = std::max_element(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) {
      return a.cells.size() < b.cells.size();
    });
    const DashFeature d = dash_feature(largest->centers);
    EXPECT_LT(std::acos(abs_cos(d.direction, u)), 0.05);
  }
}

TEST(DashFeature, IsotropicIsAmbiguous) {
  const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  try {
    dash_feature(square);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ambiguous_direction);
  }
}

TEST(AngleGates, ClosedEndsAndExclusive) {
  const AngleGates g;
  EXPECT_TRUE(g.solid(1.0));
  EXPECT_FALSE(g.solid(0.9));
  EXPECT_TRUE(g.stop(0.0));
  EXPECT_FALSE(g.stop(0.2));
  for (double c = 0.0; c <= 1.0; c += 0.001) EXPECT_FALSE(g.solid(c) && g.stop(c));
  AngleGates bad;
  bad.beta_u = 0.95;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(AngleGates, SignFlipInvariant) {
  const UnitVector2 a = UnitVector2::from_angle(0.3), b = UnitVector2::from_angle(1.2);
  EXPECT_EQ(abs_cos(a, b), abs_cos(a.flipped(), b));
  EXPECT_EQ(abs_cos(a, b), abs_cos(a, b.flipped()));
  EXPECT_EQ(abs_cos(a, b), abs_cos(a.flipped(), b.flipped()));
}

TEST(SplitSolidStop, ParallelIsSolidAndPerpendicularIsStop) {
  std::vector<Point2> line;
  std::vector<double> s;
  for (int i = 0; i < 200; ++i) {
    line.push_back({0.1 * i, 0.0});
    line.push_back({0.1 * i, 0.1});
    s.push_back(0.1 * i);
    s.push_back(0.1 * i);
  }
  const RecognitionParams params;
  auto along = [](Point2) { return UnitVector2::from(1, 0); };
  auto across = [](Point2) { return UnitVector2::from(0, 1); };
  const SplitResult a = split_solid_stop(line, s, along, params, 0.1);
  ASSERT_EQ(a.segments.size(), 1u);
  EXPECT_EQ(a.segments[0].first, MarkType::solid);
  EXPECT_EQ(a.segments[0].second.size(), line.size());
  const SplitResult b = split_solid_stop(line, s, across, params, 0.1);
  ASSERT_EQ(b.segments.size(), 1u);
  EXPECT_EQ(b.segments[0].first, MarkType::stop);
}

TEST(SplitSolidStop, ShortCandidateStaysWhole) {
  const std::vector<Point2> pts{{0, 0}, {0.5, 0}, {1.0, 0.1}};
  const std::vector<double> s{0, 0.5, 1.0};
  const SplitResult r = split_solid_stop(pts, s, [](Point2) { return UnitVector2::from(0, 1); }, RecognitionParams{}, 0.1);
  ASSERT_EQ(r.segments.size(), 1u);
  EXPECT_EQ(r.segments[0].first, MarkType::solid);
  EXPECT_TRUE(r.windows.empty());
}

TEST(Recognition, LShapeSplitsIntoSolidAndStop) {
  const RasterGrid g{{-1, -1}, 0.1, 330, 80};
  const Fixture f = raster_of(g, {rect(0.0, -0.075, 30.0, 0.075), rect(29.6, 0.075, 30.0, 6.075)});
  const auto clusters = pre_cluster_bfs(f.img);
  ASSERT_EQ(clusters.size(), 1u);
  const auto out = classify_clusters(clusters, f.img, east());
  ASSERT_EQ(out.size(), 2u);
  const ClassifiedCluster* solid = nullptr;
  const ClassifiedCluster* stop = nullptr;
  for (const auto& c : out) (c.label == MarkType::solid ? solid : stop) = &c;
  ASSERT_TRUE(solid && stop);
  EXPECT_EQ(stop->label, MarkType::stop);
  EXPECT_GE(fraction_recovered(f.truth[0], solid->base.cells), 0.95);
  EXPECT_GE(fraction_recovered(f.truth[1], stop->base.cells), 0.90);
  EXPECT_EQ(solid->base.cells.size() + stop->base.cells.size(), clusters[0].cells.size());
}

TEST(Recognition, StopAcrossSolidGivesThreePieces) {
  const RasterGrid g{{-1, -1}, 0.1, 620, 50};
  const Fixture f = raster_of(g, {rect(0.0, -0.075, 60.0, 0.075), rect(30.0, 0.075, 30.4, 3.275)});
  const auto clusters = pre_cluster_bfs(f.img);
  ASSERT_EQ(clusters.size(), 1u);
  const auto out = classify_clusters(clusters, f.img, east());
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].label, MarkType::solid);
  EXPECT_EQ(out[1].label, MarkType::stop);
  EXPECT_EQ(out[2].label, MarkType::solid);
  std::vector<std::size_t> solid_cells;
  for (const auto& c : out) {
    if (c.label == MarkType::solid) solid_cells.insert(solid_cells.end(), c.base.cells.begin(), c.base.cells.end());
  }
  std::sort(solid_cells.begin(), solid_cells.end());
  EXPECT_GE(fraction_recovered(f.truth[0], solid_cells), 0.95);
  EXPECT_GE(fraction_recovered(f.truth[1], out[1].base.cells), 0.90);
  std::set<std::size_t> seen;
  for (const auto& c : out) {
    for (std::size_t i : c.base.cells) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), clusters[0].cells.size());
}

TEST(Recognition, MixedScene) {
  const RasterGrid g{{-1, -3}, 0.1, 320, 100};
  const Fixture f = raster_of(g, {rect(0.0, -0.075, 2.0, 0.075), rect(6.0, -0.075, 8.0, 0.075),
                                  rect(0.0, 3.425, 30.0, 3.575), rect(12.0, -1.0, 15.0, 0.2)});
  const auto clusters = pre_cluster_bfs(f.img);
  ASSERT_EQ(clusters.size(), 4u);
  const auto out = classify_clusters(clusters, f.img, east());
  std::map<MarkType, int> count;
  for (const auto& c : out) ++count[c.label];
  EXPECT_EQ(count[MarkType::dashed], 2);
  EXPECT_EQ(count[MarkType::solid], 1);
  EXPECT_EQ(count[MarkType::other], 1);
  for (const auto& c : out) {
    if (c.label == MarkType::dashed) {
      ASSERT_TRUE(c.feature.has_value());
      EXPECT_NEAR(c.feature->midpoint.y, 0.0, 0.06);
    }
  }
}

TEST(Recognition, CurvedSolidIsStillSolid) {
  // 80 m arc of radius 60 m: its MBR is too wide for the line gates.
  const double r = 60.0;
  std::vector<PoseRecord> poses;
  for (int i = 0; i < 60; ++i) {
    PoseRecord p;
    p.frame_id = i;
    const double th = -0.2 + i * 1.5 / r;
    p.pose.position = {r * std::cos(th), r * std::sin(th), 1.8};
    p.pose.yaw = th + std::numbers::pi / 2;
    poses.push_back(p);
  }
  const TrajectoryField field(poses);
  std::vector<CloudPoint> cloud;
  for (double s = 0.0; s < 80.0; s += 0.03) {
    for (double w = -0.07; w <= 0.07; w += 0.03) {
      const double th = s / (r + 3.5);
      const double rr = r + 3.5 + w;
      cloud.push_back({{rr * std::cos(th), rr * std::sin(th), 0.0}, 170, 0});
    }
  }
  const RasterImage img = rasterize(cloud);
  const auto clusters = pre_cluster_bfs(img);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(classify_by_mbr(clusters[0]), ShapeClass::other);
  const auto out = classify_clusters(clusters, img, field);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].label, MarkType::solid);
}

TEST(Recognition, PpmOverlay) {
  const RasterGrid g{{-1, -1}, 0.1, 40, 10};
  const Fixture f = raster_of(g, {rect(0.0, -0.075, 2.0, 0.075)});
  const auto out = classify_clusters(pre_cluster_bfs(f.img), f.img, east());
  std::ostringstream os;
  write_ppm(os, f.img, out);
  const std::string header = "P6\n40 10\n255\n";
  const std::string s = os.str();
  ASSERT_EQ(s.substr(0, header.size()), header);
  ASSERT_EQ(s.size(), header.size() + 40 * 10 * 3);
  std::size_t green = 0;
  for (std::size_t i = header.size(); i < s.size(); i += 3) {
    green += s[i] == 0 && static_cast<unsigned char>(s[i + 1]) == 255 && s[i + 2] == 0;
  }
  EXPECT_EQ(green, f.truth[0].size());
}
