#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include "lanemap/error.hpp"
#include "lanemap/frame.hpp"
#include "lanemap/geometry.hpp"

namespace lanemap {

struct PreprocessParams {
  std::vector<double> elevations;  ///< beam elevation per ring, radians
  double mount_height = 1.8;
  double azimuth_step = 0.4 * std::numbers::pi / 180.0;

  double ring_gap_factor = 0.7;   ///< compressed when spacing < factor * flat spacing
  double min_height_step = 0.06;  ///< differential filter, meters over the ring window
  double max_lateral = 10.0;      ///< distance filter, meters from the trajectory line
  double max_residual = 0.3;      ///< regression filter, meters
  int min_side_points = 5;
  double max_flat_spacing = 2.0;  ///< rings spaced wider than this on flat ground are not compared
  double boundary_step = 0.5;     ///< sample spacing of the output polylines
  double extrapolation = 20.0;    ///< output polylines extend the fitted curb beyond the survivors
  double corridor_half_width = 8.0;

  double grid_size = 0.5;
  double max_height_variance = 0.04;
  double compression_height_span = 0.25;
  double obstacle_height = 0.25;
  int neighbor_cells = 4;

  void validate() const {
    if (elevations.size() < 2) throw Error(ErrorCode::config_error, "ring elevation angles are unknown");
    if (!(mount_height > 0.0) || !(azimuth_step > 0.0) || !(grid_size > 0.0) || !(boundary_step > 0.0)) {
      throw Error(ErrorCode::config_error, "preprocess sizes must be positive");
    }
    if (ring_gap_factor < 0.0) throw Error(ErrorCode::config_error, "ring_gap_factor must be non-negative");
  }
};

/// Boundary polylines in the frame's planar coordinates, ordered by x
/// (the trajectory line is the x axis).
struct RoadBoundary {
  Polyline left;
  Polyline right;

  static RoadBoundary corridor(double half_width, double reach = 200.0) {
    return {{{-reach, half_width}, {reach, half_width}}, {{-reach, -half_width}, {reach, -half_width}}};
  }

  /// Lateral position of a side at x; clamped to the end offsets beyond the extent.
  static double lateral_at(const Polyline& line, double x) {
    if (line.empty()) return 0.0;
    if (x <= line.front().x) return line.front().y;
    if (x >= line.back().x) return line.back().y;
    const auto it = std::upper_bound(line.begin(), line.end(), x, [](double v, Point2 p) { return v < p.x; });
    const Point2 b = *it, a = *(it - 1);
    if (b.x == a.x) return b.y;
    return a.y + (x - a.x) * (b.y - a.y) / (b.x - a.x);
  }

  bool inside(Point2 p) const { return p.y < lateral_at(left, p.x) && p.y > lateral_at(right, p.x); }
};

struct BoundaryFit {
  RoadBoundary boundary;
  bool left_found = false;
  bool right_found = false;
  std::vector<std::size_t> survivors;  ///< candidate indices kept by all three filters
};

enum class PointLabel : std::uint8_t { ground, obstacle, boundary_candidate };
using GroundLabeling = std::vector<PointLabel>;

namespace detail {

// Points of a frame grouped by azimuth column, each column sorted by ring.
struct RingColumns {
  std::vector<std::vector<std::size_t>> columns;
  std::vector<std::pair<std::size_t, std::size_t>> where;  // point -> (column, slot)

  RingColumns(const LidarFrame& frame, const PreprocessParams& p) : where(frame.points.size()) {
    std::map<long, std::size_t> index;
    for (std::size_t i = 0; i < frame.points.size(); ++i) {
      const long key = std::lround(frame.points[i].azimuth / p.azimuth_step);
      auto [it, fresh] = index.try_emplace(key, columns.size());
      if (fresh) columns.emplace_back();
      columns[it->second].push_back(i);
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
      auto& col = columns[c];
      std::stable_sort(col.begin(), col.end(),
                       [&](std::size_t a, std::size_t b) { return frame.points[a].ring < frame.points[b].ring; });
      for (std::size_t s = 0; s < col.size(); ++s) where[col[s]] = {c, s};
    }
  }
};

inline double flat_range(const PreprocessParams& p, int ring) {
  return p.mount_height / std::tan(-p.elevations[static_cast<std::size_t>(ring)]);
}

inline bool looks_down(const PreprocessParams& p, int ring) {
  return ring >= 0 && static_cast<std::size_t>(ring) < p.elevations.size() &&
         p.elevations[static_cast<std::size_t>(ring)] < 0.0;
}

inline void check_rings(const LidarFrame& frame, const PreprocessParams& p) {
  for (const ScanPoint& s : frame.points) {
    if (s.ring < 0 || static_cast<std::size_t>(s.ring) >= p.elevations.size()) {
      throw Error(ErrorCode::config_error, "ring index without a configured elevation angle");
    }
  }
}

// Calls f(a, b) for every consecutive downward ring pair whose planar spacing
// is compressed relative to flat ground.
template <class F>
void for_each_compressed_pair(const LidarFrame& frame, const RingColumns& rc, const PreprocessParams& p, F&& f) {
  for (const auto& col : rc.columns) {
    for (std::size_t k = 0; k + 1 < col.size(); ++k) {
      const ScanPoint& a = frame.points[col[k]];
      const ScanPoint& b = frame.points[col[k + 1]];
      if (a.ring == b.ring || !looks_down(p, a.ring) || !looks_down(p, b.ring)) continue;
      const double expected = flat_range(p, b.ring) - flat_range(p, a.ring);
      if (expected > p.max_flat_spacing) continue;
      const double spacing = distance(planar(a.position), planar(b.position));
      if (spacing < p.ring_gap_factor * expected) f(col[k], col[k + 1]);
    }
  }
}

// Least-squares polynomial y = c0 + c1 x + c2 x^2, dropping order when singular.
inline std::array<double, 3> fit_quadratic(const std::vector<Point2>& pts, int order = 2) {
  std::array<double, 3> coef{};
  if (pts.empty()) return coef;
  order = std::min(order, static_cast<int>(pts.size()) - 1);
  const int n = order + 1;
  double a[3][4] = {};
  for (const Point2& q : pts) {
    const double pw[3] = {1.0, q.x, q.x * q.x};
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a[i][j] += pw[i] * pw[j];
      a[i][3] += pw[i] * q.y;
    }
  }
  const double scale = a[0][0];
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    for (int k = 0; k < 4; ++k) std::swap(a[c][k], a[piv][k]);
    if (std::abs(a[c][c]) <= 1e-12 * scale) return order > 0 ? fit_quadratic(pts, order - 1) : coef;
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double m = a[r][c] / a[c][c];
      for (int k = c; k < 4; ++k) a[r][k] -= m * a[c][k];
    }
  }
  for (int i = 0; i < n; ++i) coef[i] = a[i][3] / a[i][i];
  return coef;
}

inline double eval_quadratic(const std::array<double, 3>& c, double x) { return c[0] + x * (c[1] + x * c[2]); }

}  // namespace detail

/// Points on runs of consecutive-ring pairs whose planar spacing is compressed
/// below ring_gap_factor times the flat-ground expectation. The last point of
/// a run (typically past the curb top) is not flagged.
inline std::vector<std::size_t> detect_curb_candidates(const LidarFrame& frame, const PreprocessParams& params) {
  params.validate();
  detail::check_rings(frame, params);
  std::vector<char> flag(frame.points.size(), 0);
  const detail::RingColumns rc(frame, params);
  // A run of compressed pairs p0..pk flags p1..p(k-1); a lone pair flags p1.
  std::vector<char> inner(frame.points.size(), 0), outer(frame.points.size(), 0);
  detail::for_each_compressed_pair(frame, rc, params, [&](std::size_t a, std::size_t b) {
    inner[a] = 1;
    outer[b] = 1;
  });
  for (std::size_t i = 0; i < flag.size(); ++i) {
    if (!outer[i]) continue;
    const auto [c, s] = rc.where[i];
    const std::size_t prev = rc.columns[c][s - 1];
    flag[i] = inner[i] || !outer[prev];
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flag.size(); ++i) {
    if (flag[i]) out.push_back(i);
  }
  return out;
}

/// Differential, distance, and regression filters, then per-side polylines.
inline BoundaryFit filter_boundary(std::span<const std::size_t> candidates, const LidarFrame& frame,
                                   const PreprocessParams& params) {
  params.validate();
  const detail::RingColumns rc(frame, params);
  BoundaryFit fit;
  std::vector<std::size_t> side[2];

  for (std::size_t i : candidates) {
    const auto [c, s] = rc.where[i];
    const auto& col = rc.columns[c];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = s > 0 ? s - 1 : 0; k <= std::min(col.size() - 1, s + 2); ++k) {
      lo = std::min(lo, frame.points[col[k]].position.z);
      hi = std::max(hi, frame.points[col[k]].position.z);
    }
    if (hi - lo < params.min_height_step) continue;
    const Point3& p = frame.points[i].position;
    if (std::abs(p.y) > params.max_lateral) continue;
    side[p.y > 0.0 ? 0 : 1].push_back(i);
  }

  for (int k = 0; k < 2; ++k) {
    std::vector<Point2> pts;
    for (std::size_t i : side[k]) pts.push_back(planar(frame.points[i].position));
    std::array<double, 3> coef = detail::fit_quadratic(pts);
    std::vector<std::size_t> keep;
    for (std::size_t i : side[k]) {
      const Point2 q = planar(frame.points[i].position);
      if (std::abs(q.y - detail::eval_quadratic(coef, q.x)) <= params.max_residual) keep.push_back(i);
    }
    if (static_cast<int>(keep.size()) < params.min_side_points) continue;
    pts.clear();
    for (std::size_t i : keep) pts.push_back(planar(frame.points[i].position));
    coef = detail::fit_quadratic(pts);

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
    for (std::size_t i : keep) {
      x0 = std::min(x0, frame.points[i].position.x);
      x1 = std::max(x1, frame.points[i].position.x);
    }
    x0 -= params.extrapolation;
    x1 += params.extrapolation;
    const int steps = std::max(1, static_cast<int>(std::ceil((x1 - x0) / params.boundary_step)));
    Polyline line;
    for (int j = 0; j <= steps; ++j) {
      const double x = x0 + (x1 - x0) * j / steps;
      line.push_back({x, detail::eval_quadratic(coef, x)});
    }
    (k == 0 ? fit.boundary.left : fit.boundary.right) = std::move(line);
    (k == 0 ? fit.left_found : fit.right_found) = true;
    fit.survivors.insert(fit.survivors.end(), keep.begin(), keep.end());
  }
  std::sort(fit.survivors.begin(), fit.survivors.end());

  const RoadBoundary fallback = RoadBoundary::corridor(params.corridor_half_width);
  if (!fit.left_found) fit.boundary.left = fallback.left;
  if (!fit.right_found) fit.boundary.right = fallback.right;
  return fit;
}

/// Grid-based ground/obstacle labeling in the frame's planar coordinates.
inline GroundLabeling segment_ground(const LidarFrame& frame, const PreprocessParams& params) {
  GroundLabeling labels(frame.points.size(), PointLabel::ground);
  if (frame.points.empty()) return labels;
  params.validate();
  detail::check_rings(frame, params);

  struct Cell {
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    double comp_lo = std::numeric_limits<double>::infinity();
    double comp_hi = -std::numeric_limits<double>::infinity();
    bool obstacle = false;
  };
  auto key_of = [&](Point3 p) {
    const auto cx = static_cast<std::int64_t>(std::floor(p.x / params.grid_size));
    const auto cy = static_cast<std::int64_t>(std::floor(p.y / params.grid_size));
    return std::pair{cx, cy};
  };
  auto pack = [](std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x + (1 << 30)) << 32) | static_cast<std::uint64_t>(y + (1 << 30));
  };
  std::unordered_map<std::uint64_t, Cell> cells;
  std::vector<std::uint64_t> point_cell(frame.points.size());
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const Point3& p = frame.points[i].position;
    const auto [cx, cy] = key_of(p);
    point_cell[i] = pack(cx, cy);
    Cell& c = cells[point_cell[i]];
    c.sum += p.z;
    c.sum2 += p.z * p.z;
    ++c.n;
  }

  const detail::RingColumns rc(frame, params);
  detail::for_each_compressed_pair(frame, rc, params, [&](std::size_t a, std::size_t b) {
    for (std::size_t i : {a, b}) {
      Cell& c = cells[point_cell[i]];
      c.comp_lo = std::min(c.comp_lo, frame.points[i].position.z);
      c.comp_hi = std::max(c.comp_hi, frame.points[i].position.z);
    }
  });

  for (auto& [key, c] : cells) {
    const double mean = c.sum / c.n;
    const double var = std::max(0.0, c.sum2 / c.n - mean * mean);
    c.obstacle = var > params.max_height_variance || (c.comp_hi - c.comp_lo) > params.compression_height_span;
  }

  std::vector<std::uint64_t> raised;
  for (const auto& [key, c] : cells) {
    if (c.obstacle) continue;
    const auto cx = static_cast<std::int64_t>(key >> 32) - (1 << 30);
    const auto cy = static_cast<std::int64_t>(key & 0xffffffffu) - (1 << 30);
    double ref = std::numeric_limits<double>::infinity();
    for (int dy = -params.neighbor_cells; dy <= params.neighbor_cells; ++dy) {
      for (int dx = -params.neighbor_cells; dx <= params.neighbor_cells; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const auto it = cells.find(pack(cx + dx, cy + dy));
        if (it == cells.end() || it->second.obstacle) continue;
        ref = std::min(ref, it->second.sum / it->second.n);
      }
    }
    if (!std::isfinite(ref)) ref = -params.mount_height;
    if (c.sum / c.n > ref + params.obstacle_height) raised.push_back(key);
  }
  for (std::uint64_t key : raised) cells[key].obstacle = true;

  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    if (cells[point_cell[i]].obstacle) labels[i] = PointLabel::obstacle;
  }
  return labels;
}

/// Marks boundary survivors on a labeling (obstacle labels take precedence).
inline void mark_boundary(GroundLabeling& labels, std::span<const std::size_t> survivors) {
  for (std::size_t i : survivors) {
    if (labels[i] == PointLabel::ground) labels[i] = PointLabel::boundary_candidate;
  }
}

/// Ground points within the ring window and strictly inside the boundary corridor.
inline std::vector<std::size_t> clip_to_road(const LidarFrame& frame, const RoadBoundary& boundary,
                                             const GroundLabeling& labels, std::pair<int, int> near_far) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const ScanPoint& p = frame.points[i];
    if (labels[i] != PointLabel::ground) continue;
    if (p.ring < near_far.first || p.ring > near_far.second) continue;
    if (boundary.inside(planar(p.position))) out.push_back(i);
  }
  return out;
}

}  // namespace lanemap
