#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "lanemap/evaluation.hpp"

using namespace lanemap;

namespace {

RasterGrid grid_at(Point2 origin, int w, int h, double res = 0.1) { return {origin, res, w, h}; }

Polygon rotated_rect(Point2 c, double length, double width, double angle) {
  const UnitVector2 u = UnitVector2::from_angle(angle);
  auto at = [&](double l, double w) { return c + l * u.vec() + w * u.left_normal().vec(); };
  return {at(-length / 2, -width / 2), at(length / 2, -width / 2), at(length / 2, width / 2), at(-length / 2, width / 2)};
}

// Brute force: point_in_polygon on every subsample of every cell.
std::vector<std::size_t> brute_cells(const Polygon& poly, const RasterGrid& g, int s = 4, double cov = 0.5) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Cell c = g.cell_at(i);
    int in = 0;
    for (int a = 0; a < s; ++a) {
      for (int b = 0; b < s; ++b) {
        const Point2 q{g.origin.x + (c.col + (a + 0.5) / s) * g.resolution,
                       g.origin.y + (c.row + (b + 0.5) / s) * g.resolution};
        in += point_in_polygon(poly, q);
      }
    }
    if (in >= cov * s * s) out.push_back(i);
  }
  return out;
}

ClassifiedCluster prediction(int id, MarkType label, std::vector<std::size_t> cells) {
  ClassifiedCluster c;
  c.base.id = id;
  c.base.cells = std::move(cells);
  c.label = label;
  return c;
}

std::vector<std::size_t> block(const RasterGrid& g, int c0, int r0, int w, int h) {
  std::vector<std::size_t> out;
  for (int r = r0; r < r0 + h; ++r) {
    for (int c = c0; c < c0 + w; ++c) out.push_back(g.index({c, r}));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Indicators, FirstDatasetAggregate) {
  MetricCounts m;
  m[MarkType::dashed] = {485, 27, 74};
  m[MarkType::solid] = {120, 12, 8};
  m[MarkType::stop] = {13, 1, 0};
  m[MarkType::other] = {101, 9, 18};
  const ClassCounts t = m.total();
  EXPECT_EQ(t.tp, 719u);
  EXPECT_EQ(t.fp, 49u);
  EXPECT_EQ(t.fn, 100u);
  const Indicators ind = compute_indicators(m);
  EXPECT_NEAR(ind.precision, 0.936, 0.001);
  EXPECT_NEAR(ind.recall, 0.878, 0.001);
  EXPECT_NEAR(ind.fscore, 0.453, 0.001);
}

TEST(Indicators, SecondDatasetAggregate) {
  const Indicators ind = compute_indicators(ClassCounts{714, 48, 38});
  EXPECT_NEAR(ind.precision, 0.937, 0.001);
  EXPECT_NEAR(ind.recall, 0.950, 0.001);
  EXPECT_NEAR(ind.fscore, 0.472, 0.001);
}

TEST(Indicators, SymmetricCountsAndToggle) {
  const Indicators ind = compute_indicators(ClassCounts{7, 7, 7});
  EXPECT_DOUBLE_EQ(ind.precision, 0.5);
  EXPECT_DOUBLE_EQ(ind.recall, 0.5);
  EXPECT_DOUBLE_EQ(ind.fscore, 0.25);
  EXPECT_DOUBLE_EQ(compute_indicators(ClassCounts{7, 7, 7}, FscoreFormula::standard_f1).fscore, 0.5);
  EXPECT_FALSE(compute_indicators(ClassCounts{0, 0, 3}).defined);
  EXPECT_FALSE(compute_indicators(ClassCounts{0, 3, 0}).defined);
}

TEST(Indicators, BoundedScores) {
  std::mt19937_64 gen(2);
  for (int k = 0; k < 1000; ++k) {
    const ClassCounts c{gen() % 1000, gen() % 1000, gen() % 1000};
    const Indicators ind = compute_indicators(c);
    if (!ind.defined) continue;
    EXPECT_GE(ind.precision, 0.0);
    EXPECT_LE(ind.precision, 1.0);
    EXPECT_GE(ind.recall, 0.0);
    EXPECT_LE(ind.recall, 1.0);
    EXPECT_LE(ind.fscore, 0.5);
    EXPECT_LE(ind.fscore, std::min(ind.precision, ind.recall) + 1e-15);
  }
}

TEST(TruthRaster, MatchesBruteForce) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const RasterGrid g = grid_at({-2.0, -1.5}, 60, 50);
  for (int k = 0; k < 60; ++k) {
    const Point2 c{-0.5 + 1.5 * u(gen), -0.5 + 1.5 * u(gen)};
    const Polygon poly = k % 3 == 2 ? Polygon{c, c + Point2{2.0 * u(gen), 0.3 * u(gen)}, c + Point2{0.5 * u(gen), 1.5 * u(gen)}}
                                    : rotated_rect(c, 0.3 + 3.0 * u(gen), 0.1 + 0.5 * u(gen), std::numbers::pi * u(gen));
    EXPECT_EQ(rasterize_polygon(poly, g), brute_cells(poly, g)) << "polygon " << k;
  }
}

TEST(TruthRaster, AlignedRectangleIsExact) {
  const RasterGrid g = grid_at({0.0, 0.0}, 40, 20);
  const auto cells = rasterize_polygon(Polygon{{1.0, 0.5}, {3.0, 0.5}, {3.0, 0.7}, {1.0, 0.7}}, g);
  EXPECT_EQ(cells, block(g, 10, 5, 20, 2));
}

TEST(TruthRaster, SolidSplitsAtStopLine) {
  GroundTruth truth;
  truth.marks.push_back({0, MarkType::solid, 0, -1, 0.0, 40.0, true, {{0.0, -0.075}, {40.0, -0.075}, {40.0, 0.075}, {0.0, 0.075}}});
  truth.marks.push_back({1, MarkType::stop, -1, 0, 19.8, 20.2, true, {{19.8, 0.075}, {20.2, 0.075}, {20.2, 3.2}, {19.8, 3.2}}});
  truth.marks.push_back({2, MarkType::dashed, 1, -1, 0.0, 2.0, false, {{0.0, 3.4}, {2.0, 3.4}, {2.0, 3.6}, {0.0, 3.6}}});
  const RasterGrid g = grid_at({-1.0, -1.0}, 430, 60);
  const auto objs = rasterize_truth(truth, g);
  ASSERT_EQ(objs.size(), 3u);  // absent dash dropped
  std::size_t solid_cells = 0, solids = 0;
  for (const auto& o : objs) {
    if (o.type != MarkType::solid) continue;
    ++solids;
    solid_cells += o.cells.size();
    EXPECT_GT(o.cells.size(), 350u);
  }
  EXPECT_EQ(solids, 2u);
  EXPECT_EQ(solid_cells, rasterize_polygon(truth.marks[0].polygon, g).size());
}

TEST(Match, PerfectPrediction) {
  const RasterGrid g = grid_at({0, 0}, 100, 100);
  std::vector<TruthObject> truth{{0, MarkType::dashed, block(g, 0, 0, 20, 2)},
                                 {1, MarkType::solid, block(g, 0, 10, 90, 2)},
                                 {2, MarkType::other, block(g, 40, 40, 10, 10)}};
  std::vector<ClassifiedCluster> pred;
  for (const auto& t : truth) pred.push_back(prediction(t.mark_id, t.type, t.cells));
  const MatchResult r = match_objects(pred, truth);
  EXPECT_EQ(r.counts[MarkType::dashed].tp, 1u);
  EXPECT_EQ(r.counts[MarkType::solid].tp, 1u);
  EXPECT_EQ(r.counts[MarkType::other].tp, 1u);
  EXPECT_EQ(r.counts.total().fp, 0u);
  EXPECT_EQ(r.counts.total().fn, 0u);
}

TEST(Match, WrongLabelIsFalsePositiveAndMiss) {
  const RasterGrid g = grid_at({0, 0}, 100, 100);
  std::vector<TruthObject> truth{{0, MarkType::dashed, block(g, 0, 0, 20, 2)}};
  std::vector<ClassifiedCluster> pred{prediction(0, MarkType::other, block(g, 0, 0, 20, 2))};
  const MatchResult r = match_objects(pred, truth);
  EXPECT_EQ(r.counts[MarkType::dashed].fn, 1u);
  EXPECT_EQ(r.counts[MarkType::other].fp, 1u);
  EXPECT_EQ(r.counts.total().tp, 0u);
}

TEST(Match, TenObjectFixture) {
  // 10 dashes; predictions: 6 exact, 1 shifted by 25% (IoU 0.6), 1 shifted by
  // 60% (IoU 0.25, under 0.5), 1 missing, 1 split in two halves, 1 spurious.
  const RasterGrid g = grid_at({0, 0}, 400, 10);
  std::vector<TruthObject> truth;
  for (int i = 0; i < 10; ++i) truth.push_back({i, MarkType::dashed, block(g, 40 * i, 2, 20, 2)});
  std::vector<ClassifiedCluster> pred;
  for (int i = 0; i < 6; ++i) pred.push_back(prediction(i, MarkType::dashed, truth[i].cells));
  pred.push_back(prediction(6, MarkType::dashed, block(g, 40 * 6 + 5, 2, 20, 2)));
  pred.push_back(prediction(7, MarkType::dashed, block(g, 40 * 7 + 12, 2, 20, 2)));
  pred.push_back(prediction(8, MarkType::other, block(g, 395, 0, 3, 3)));
  pred.push_back(prediction(9, MarkType::dashed, block(g, 40 * 9, 2, 10, 2)));
  pred.push_back(prediction(10, MarkType::dashed, block(g, 40 * 9 + 10, 2, 10, 2)));
  const MatchResult r = match_objects(pred, truth);
  // TP: 0-5 and 6 (IoU 15/25). The halves of 9 have IoU exactly 0.5.
  EXPECT_EQ(r.counts[MarkType::dashed].tp, 8u);
  EXPECT_EQ(r.counts[MarkType::dashed].fp, 2u);  // shifted 7, second half of 9
  EXPECT_EQ(r.counts[MarkType::dashed].fn, 2u);  // truths 7 and 8
  EXPECT_EQ(r.counts[MarkType::other].fp, 1u);
  for (const auto& m : r.matches) {
    if (m.truth == 9) {
      EXPECT_EQ(m.prediction, 9);  // tie goes to the smaller index
    }
  }
}

TEST(Match, CountsAreConserved) {
  std::mt19937_64 gen(8);
  const RasterGrid g = grid_at({0, 0}, 200, 200);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TruthObject> truth;
    std::vector<ClassifiedCluster> pred;
    for (int i = 0; i < 15; ++i) {
      const int c = static_cast<int>(gen() % 180), r = static_cast<int>(gen() % 180);
      truth.push_back({i, kMarkTypes[gen() % 4], block(g, c, r, 10 + static_cast<int>(gen() % 10), 3)});
      pred.push_back(prediction(i, kMarkTypes[gen() % 4],
                                block(g, c + static_cast<int>(gen() % 5), r, 10 + static_cast<int>(gen() % 10), 3)));
    }
    const MatchResult res = match_objects(pred, truth);
    for (MarkType t : kMarkTypes) {
      const auto nt = std::count_if(truth.begin(), truth.end(), [&](const TruthObject& o) { return o.type == t; });
      const auto np = std::count_if(pred.begin(), pred.end(), [&](const ClassifiedCluster& o) { return o.label == t; });
      EXPECT_EQ(res.counts[t].tp + res.counts[t].fn, static_cast<std::uint64_t>(nt));
      EXPECT_EQ(res.counts[t].tp + res.counts[t].fp, static_cast<std::uint64_t>(np));
    }
  }
}

namespace {

Polyline arc(double radius, double length, double offset, double step) {
  Polyline out;
  for (double s = 0.0; s <= length + 1e-9; s += step) {
    const double t = s / radius, r = radius - offset;
    out.push_back({r * std::sin(t), radius - r * std::cos(t)});
  }
  return out;
}

}  // namespace

TEST(CurveRmse, IdentityAndOffset) {
  const Polyline truth = arc(1e9, 60.0, 0.0, 0.1);
  Polyline pts;
  for (double x = 5.0; x <= 55.0; x += 0.5) pts.push_back({x, 0.0});
  const LaneCurve exact = fit_curve(parameterize_arclength(pts));
  EXPECT_NEAR(curve_rmse(exact, truth), 0.0, 1e-4);
  for (Point2& p : pts) p.y += 0.05;
  EXPECT_NEAR(curve_rmse(fit_curve(parameterize_arclength(pts)), truth), 5.0, 1e-4);
}

TEST(CurveRmse, NoOverlap) {
  const Polyline truth{{0, 0}, {10, 0}};
  Polyline pts;
  for (double x = 20.0; x <= 30.0; x += 0.5) pts.push_back({x, 1.0});
  try {
    curve_rmse(fit_curve(parameterize_arclength(pts)), truth);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_overlap);
  }
}

TEST(CurveRmse, NoisyCurvedLaneUnderTenCentimeters) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> noise(0.0, 0.03);
  const Polyline truth = arc(200.0, 150.0, 1.75, 0.1);
  Polyline pts;
  for (std::size_t i = 0; i < truth.size(); ++i) pts.push_back({truth[i].x + noise(gen), truth[i].y + noise(gen)});
  const double rmse = curve_rmse(fit_curve(parameterize_arclength(pts)), truth);
  EXPECT_LT(rmse, 10.0);
  EXPECT_GT(rmse, 0.0);
}

TEST(CurveRmse, EvaluateLanesPicksMatchingBoundary) {
  GroundTruth truth;
  truth.lanes.push_back({0, MarkType::solid, arc(1e9, 100.0, 1.75, 0.5)});
  truth.lanes.push_back({1, MarkType::dashed, arc(1e9, 100.0, -1.75, 0.5)});
  truth.lanes.push_back({2, MarkType::solid, arc(1e9, 100.0, 5.25, 0.5)});
  LaneMap map;
  Polyline pts;
  for (double x = 10.0; x <= 90.0; x += 0.5) pts.push_back({x, 5.27});
  map.lines.push_back({0, MarkType::solid, {0}, fit_curve(parameterize_arclength(pts)), {}});
  const auto acc = evaluate_lanes(map, truth);
  ASSERT_EQ(acc.size(), 1u);
  EXPECT_EQ(acc[0].boundary, 2);
  EXPECT_NEAR(acc[0].rmse_cm, 2.0, 1e-3);
}
