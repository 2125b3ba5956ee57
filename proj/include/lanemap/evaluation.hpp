#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "lanemap/accumulate.hpp"
#include "lanemap/clustering.hpp"
#include "lanemap/error.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/lane_model.hpp"
#include "lanemap/marking.hpp"
#include "lanemap/polygon.hpp"
#include "lanemap/recognition.hpp"
#include "lanemap/scene.hpp"

namespace lanemap {

struct ClassCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

struct MetricCounts {
  std::array<ClassCounts, 4> by_class{};  ///< indexed by index_of(MarkType)

  ClassCounts& operator[](MarkType t) { return by_class[index_of(t)]; }
  const ClassCounts& operator[](MarkType t) const { return by_class[index_of(t)]; }

  ClassCounts total() const {
    ClassCounts s;
    for (const ClassCounts& c : by_class) {
      s.tp += c.tp;
      s.fp += c.fp;
      s.fn += c.fn;
    }
    return s;
  }
};

enum class FscoreFormula { product_over_sum, standard_f1 };

struct Indicators {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  bool defined = true;  ///< false when TP+FP or TP+FN is zero
};

/// Precision = TP/(TP+FP), Recall = TP/(TP+FN), Fscore = P R / (P + R)
/// (or the standard 2 P R / (P + R)).
inline Indicators compute_indicators(const ClassCounts& c,
                                     FscoreFormula formula = FscoreFormula::product_over_sum) {
  Indicators ind;
  if (c.tp + c.fp == 0 || c.tp + c.fn == 0) {
    ind.defined = false;
    return ind;
  }
  ind.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  ind.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double sum = ind.precision + ind.recall;
  if (sum > 0.0) {
    ind.fscore = ind.precision * ind.recall / sum;
    if (formula == FscoreFormula::standard_f1) ind.fscore *= 2.0;
  }
  return ind;
}

inline Indicators compute_indicators(const MetricCounts& counts,
                                     FscoreFormula formula = FscoreFormula::product_over_sum) {
  return compute_indicators(counts.total(), formula);
}

/// Raster cells (ascending indices) with at least `min_coverage` of an s x s
/// subsample lattice inside the polygon. Scanline fill with the even-odd rule.
inline std::vector<std::size_t> rasterize_polygon(std::span<const Point2> poly, const RasterGrid& grid,
                                                  int supersample = 4, double min_coverage = 0.5) {
  if (supersample < 1) throw Error(ErrorCode::config_error, "supersample must be at least 1");
  const Box2 box = bounding_box(poly);
  if (box.empty() || poly.size() < 3) return {};
  const double sub = grid.resolution / supersample;
  // subsample row j has y = origin.y + (j + 0.5) * sub
  auto row_of = [&](double y) { return static_cast<long long>(std::ceil((y - grid.origin.y) / sub - 0.5)); };
  const long long j0 = std::max(0LL, row_of(box.min.y));
  const long long j1 = std::min(static_cast<long long>(grid.height) * supersample - 1, row_of(box.max.y));
  if (j1 < j0) return {};
  std::vector<std::vector<double>> crossings(static_cast<std::size_t>(j1 - j0 + 1));
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point2 a = poly[i], b = poly[(i + 1) % n];
    if (a.y == b.y) continue;
    const double ylo = std::min(a.y, b.y), yhi = std::max(a.y, b.y);
    for (long long j = std::max(j0, row_of(ylo)); j <= std::min(j1, row_of(yhi)); ++j) {
      const double y = grid.origin.y + (static_cast<double>(j) + 0.5) * sub;
      if ((a.y > y) == (b.y > y)) continue;
      crossings[static_cast<std::size_t>(j - j0)].push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
  }
  std::unordered_map<std::size_t, int> hits;
  const long long cols = static_cast<long long>(grid.width) * supersample;
  for (std::size_t r = 0; r < crossings.size(); ++r) {
    auto& xs = crossings[r];
    std::sort(xs.begin(), xs.end());
    const long long j = j0 + static_cast<long long>(r);
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // subsample columns i with x_in < origin.x + (i + 0.5) sub < x_out
      const long long i0 = std::max(0LL, static_cast<long long>(std::floor((xs[k] - grid.origin.x) / sub - 0.5)) + 1);
      const long long i1 =
          std::min(cols - 1, static_cast<long long>(std::ceil((xs[k + 1] - grid.origin.x) / sub - 0.5)) - 1);
      for (long long i = i0; i <= i1; ++i) {
        const Cell c{static_cast<int>(i / supersample), static_cast<int>(j / supersample)};
        ++hits[grid.index(c)];
      }
    }
  }
  const double need = min_coverage * supersample * supersample;
  std::vector<std::size_t> out;
  for (const auto& [idx, h] : hits) {
    if (h >= need) out.push_back(idx);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

/// 8-connected components of a cell set, each ascending, ordered by first cell.
inline std::vector<std::vector<std::size_t>> cell_components(std::span<const std::size_t> cells, const RasterGrid& grid) {
  std::unordered_map<std::size_t, int> label;
  for (std::size_t idx : cells) label[idx] = -1;
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t seed : cells) {
    if (label[seed] >= 0) continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<std::size_t> stack{seed};
    label[seed] = id;
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      out.back().push_back(idx);
      const Cell c = grid.cell_at(idx);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const Cell n{c.col + dx, c.row + dy};
          if (!grid.in_bounds(n)) continue;
          const auto it = label.find(grid.index(n));
          if (it == label.end() || it->second >= 0) continue;
          it->second = id;
          stack.push_back(it->first);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

/// Splits a solid-line cell set where a stop line (given by its MBR) meets
/// it. Cells beside the stop line are set aside, the rest split into
/// connected runs, and each set-aside cell joins the nearest run cell on its
/// own side of the stop line's center.
inline std::vector<std::vector<std::size_t>> cut_at_stop(std::span<const std::size_t> cells, const RasterGrid& grid,
                                                         const Mbr& stop) {
  const UnitVector2 across = stop.axis();
  const UnitVector2 along = across.left_normal();
  auto offsets = [&](std::size_t idx) {
    const Point2 d = grid.center(grid.cell_at(idx)) - stop.center;
    return std::pair{dot(d, along.vec()), dot(d, across.vec())};
  };
  std::vector<std::size_t> beside, rest;
  for (std::size_t idx : cells) {
    const auto [a, x] = offsets(idx);
    const bool near = std::abs(a) <= stop.half_width + grid.resolution &&
                      std::abs(x) <= stop.half_length + 2.0 * grid.resolution;
    (near ? beside : rest).push_back(idx);
  }
  if (beside.empty()) return {std::vector<std::size_t>(cells.begin(), cells.end())};
  std::vector<std::vector<std::size_t>> parts = cell_components(rest, grid);
  if (parts.empty()) return {std::vector<std::size_t>(cells.begin(), cells.end())};
  for (std::size_t idx : beside) {
    const Point2 p = grid.center(grid.cell_at(idx));
    const bool behind = offsets(idx).first < 0.0;
    std::size_t best_part = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 2 && !std::isfinite(best); ++pass) {
      for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t q : parts[k]) {
          if (pass == 0 && (offsets(q).first < 0.0) != behind) continue;
          const double d = distance(grid.center(grid.cell_at(q)), p);
          if (d < best) {
            best = d;
            best_part = k;
          }
        }
      }
    }
    parts[best_part].push_back(idx);
  }
  for (auto& part : parts) std::sort(part.begin(), part.end());
  return parts;
}

}  // namespace detail

struct TruthObject {
  int mark_id = 0;  ///< source truth mark
  MarkType type = MarkType::other;
  std::vector<std::size_t> cells;  ///< ascending raster indices
};

/// Present truth marks as raster cell sets, with solid lines split where
/// they meet a stop line.
inline std::vector<TruthObject> rasterize_truth(const GroundTruth& truth, const RasterGrid& grid) {
  std::vector<TruthObject> out;
  std::vector<Mbr> stops;
  for (const TruthMark& m : truth.marks) {
    if (m.present && m.type == MarkType::stop) {
      stops.push_back(minimum_bounding_rectangle(m.polygon));
    }
  }
  for (const TruthMark& m : truth.marks) {
    if (!m.present) continue;
    TruthObject obj{m.id, m.type, rasterize_polygon(m.polygon, grid)};
    if (obj.cells.empty()) continue;
    if (m.type != MarkType::solid) {
      out.push_back(std::move(obj));
      continue;
    }
    std::vector<std::vector<std::size_t>> pieces{std::move(obj.cells)};
    for (const Mbr& r : stops) {
      std::vector<std::vector<std::size_t>> next;
      for (auto& piece : pieces) {
        for (auto& part : detail::cut_at_stop(piece, grid, r)) next.push_back(std::move(part));
      }
      pieces = std::move(next);
    }
    for (auto& p : pieces) out.push_back({m.id, MarkType::solid, std::move(p)});
  }
  return out;
}

struct MatchParams {
  double iou_min = 0.5;
};

struct ObjectMatch {
  int prediction = -1;  ///< index into the predictions
  int truth = -1;       ///< index into the truth objects
  double iou = 0.0;
};

struct MatchResult {
  MetricCounts counts;
  std::vector<ObjectMatch> matches;
};

/// Greedy one-to-one matching by descending cell IoU (ties by prediction
/// index, then truth index). A match needs IoU >= iou_min; it is a TP when
/// the labels agree, otherwise an FP of the predicted class and an FN of the
/// true class.
inline MatchResult match_objects(std::span<const ClassifiedCluster> predicted, std::span<const TruthObject> truth,
                                 const MatchParams& params = {}) {
  std::unordered_map<std::size_t, std::vector<int>> owner;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t idx : truth[t].cells) owner[idx].push_back(static_cast<int>(t));
  }
  std::vector<std::tuple<double, int, int>> pairs;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    std::map<int, std::size_t> inter;
    for (std::size_t idx : predicted[p].base.cells) {
      const auto it = owner.find(idx);
      if (it == owner.end()) continue;
      for (int t : it->second) ++inter[t];
    }
    for (const auto& [t, n] : inter) {
      const double uni = static_cast<double>(predicted[p].base.cells.size() + truth[t].cells.size() - n);
      const double iou = static_cast<double>(n) / uni;
      if (iou >= params.iou_min) pairs.emplace_back(iou, static_cast<int>(p), t);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  MatchResult res;
  std::vector<char> used_p(predicted.size(), 0), used_t(truth.size(), 0);
  for (const auto& [iou, p, t] : pairs) {
    if (used_p[p] || used_t[t]) continue;
    used_p[p] = used_t[t] = 1;
    res.matches.push_back({p, t, iou});
    if (predicted[p].label == truth[t].type) {
      ++res.counts[truth[t].type].tp;
    } else {
      ++res.counts[predicted[p].label].fp;
      ++res.counts[truth[t].type].fn;
    }
  }
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    if (!used_p[p]) ++res.counts[predicted[p].label].fp;
  }
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!used_t[t]) ++res.counts[truth[t].type].fn;
  }
  return res;
}

/// RMSE in centimeters of the perpendicular distance from curve samples
/// (every `step` meters over the curve's domain) to the truth polyline.
/// Samples whose foot falls on an end of the truth are not counted.
inline double curve_rmse(const LaneCurve& curve, std::span<const Point2> truth, double step = 0.5) {
  if (!(step > 0.0)) throw Error(ErrorCode::config_error, "sample step must be positive");
  if (curve.pieces.empty() || truth.size() < 2) throw Error(ErrorCode::no_overlap, "nothing to compare");
  double ss = 0.0;
  std::size_t n = 0;
  const double s0 = curve.s_begin(), s1 = curve.s_end();
  const auto count = static_cast<std::size_t>(std::floor((s1 - s0) / step + 1e-9));
  for (std::size_t k = 0; k <= count; ++k) {
    const double s = std::min(s0 + step * static_cast<double>(k), s1);
    const PolylineProjection proj = project_to_polyline(curve.eval(s), truth);
    if (!proj.interior) continue;
    ss += proj.distance * proj.distance;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::no_overlap, "curve does not overlap the truth polyline");
  return 100.0 * std::sqrt(ss / static_cast<double>(n));
}

struct LaneAccuracy {
  int line_id = 0;
  MarkType type = MarkType::dashed;
  int boundary = -1;  ///< truth lane boundary compared against
  double rmse_cm = 0.0;
};

/// Curve accuracy of every fitted dashed and solid line against the truth
/// lane of the same type that fits it best.
inline std::vector<LaneAccuracy> evaluate_lanes(const LaneMap& map, const GroundTruth& truth, double step = 0.5) {
  std::vector<LaneAccuracy> out;
  for (const LaneLine& line : map.lines) {
    if (line.curve.pieces.empty() || (line.type != MarkType::dashed && line.type != MarkType::solid)) continue;
    std::optional<LaneAccuracy> best;
    for (const TruthLane& lane : truth.lanes) {
      if (lane.type != line.type) continue;
      try {
        const double r = curve_rmse(line.curve, lane.polyline, step);
        if (!best || r < best->rmse_cm) best = LaneAccuracy{line.id, line.type, lane.boundary, r};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::no_overlap) throw;
      }
    }
    if (best) out.push_back(*best);
  }
  return out;
}

}  // namespace lanemap
