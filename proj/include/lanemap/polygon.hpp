#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lanemap/geometry.hpp"

namespace lanemap {

/// Simple polygon, vertices in order, implicitly closed.
using Polygon = std::vector<Point2>;

struct Box2 {
  Point2 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point2 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  void expand(Point2 p) {
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
  }
  bool contains(Point2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
  bool empty() const { return !(min.x <= max.x); }
};

inline Box2 bounding_box(std::span<const Point2> pts) {
  Box2 b;
  for (const Point2& p : pts) b.expand(p);
  return b;
}

/// Signed shoelace area (positive for counter-clockwise).
inline double signed_area(std::span<const Point2> poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

inline Point2 polygon_centroid(std::span<const Point2> poly) {
  const double a = signed_area(poly);
  Point2 c;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point2 p = poly[i], q = poly[(i + 1) % n];
    const double w = cross(p, q);
    c = c + w * (p + q);
  }
  return (1.0 / (6.0 * a)) * c;
}

namespace detail {
// Crossing of the upward ray from q with edge (a, b), half-open in x.
inline bool upward_crossing(Point2 a, Point2 b, Point2 q) {
  if ((a.x > q.x) == (b.x > q.x)) return false;
  const double y = a.y + (q.x - a.x) * (b.y - a.y) / (b.x - a.x);
  return y > q.y;
}
}  // namespace detail

/// Crossing-number containment test with an upward ray.
inline bool point_in_polygon(std::span<const Point2> poly, Point2 q) {
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    if (detail::upward_crossing(poly[i], poly[(i + 1) % n], q)) inside = !inside;
  }
  return inside;
}

/// Accelerated containment for a set of disjoint polygons. Each query runs the
/// same upward-ray predicate as point_in_polygon but only over the edges whose
/// x-extent covers the query column.
class PolygonLocator {
 public:
  explicit PolygonLocator(std::span<const Polygon> polygons, double column_width = 0.5,
                          double bucket_size = 2.0)
      : column_width_(column_width), bucket_size_(bucket_size) {
    for (const Polygon& poly : polygons) {
      Entry e;
      e.vertices = poly;
      e.box = bounding_box(poly);
      if (!e.box.empty()) {
        const auto columns = static_cast<std::size_t>(std::floor((e.box.max.x - e.box.min.x) / column_width_)) + 1;
        e.columns.resize(columns);
        for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
          const Point2 a = poly[i], b = poly[(i + 1) % n];
          const std::size_t c0 = column_of(e, std::min(a.x, b.x));
          const std::size_t c1 = column_of(e, std::max(a.x, b.x));
          for (std::size_t c = c0; c <= c1; ++c) e.columns[c].push_back(static_cast<std::uint32_t>(i));
        }
        world_.expand(e.box.min);
        world_.expand(e.box.max);
      }
      entries_.push_back(std::move(e));
    }
    if (world_.empty()) return;
    nx_ = static_cast<std::size_t>(std::floor((world_.max.x - world_.min.x) / bucket_size_)) + 1;
    ny_ = static_cast<std::size_t>(std::floor((world_.max.y - world_.min.y) / bucket_size_)) + 1;
    buckets_.resize(nx_ * ny_);
    for (std::size_t id = 0; id < entries_.size(); ++id) {
      const Box2& b = entries_[id].box;
      if (b.empty()) continue;
      const auto [x0, y0] = bucket_of(b.min);
      const auto [x1, y1] = bucket_of(b.max);
      for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) buckets_[y * nx_ + x].push_back(static_cast<std::uint32_t>(id));
    }
  }

  std::size_t size() const { return entries_.size(); }

  bool contains(std::size_t polygon, Point2 q) const {
    const Entry& e = entries_[polygon];
    if (e.box.empty() || !e.box.contains(q)) return false;
    const auto& column = e.columns[column_of(e, q.x)];
    bool inside = false;
    const std::size_t n = e.vertices.size();
    for (std::uint32_t i : column) {
      if (detail::upward_crossing(e.vertices[i], e.vertices[(i + 1) % n], q)) inside = !inside;
    }
    return inside;
  }

  /// Index of the first polygon containing q, or -1.
  int locate(Point2 q) const {
    if (buckets_.empty() || !world_.contains(q)) return -1;
    const auto [x, y] = bucket_of(q);
    for (std::uint32_t id : buckets_[y * nx_ + x]) {
      if (contains(id, q)) return static_cast<int>(id);
    }
    return -1;
  }

 private:
  struct Entry {
    Polygon vertices;
    Box2 box;
    std::vector<std::vector<std::uint32_t>> columns;
  };

  std::size_t column_of(const Entry& e, double x) const {
    const double c = std::floor((x - e.box.min.x) / column_width_);
    return std::min(static_cast<std::size_t>(std::max(c, 0.0)), e.columns.size() - 1);
  }
  std::pair<std::size_t, std::size_t> bucket_of(Point2 p) const {
    const double bx = std::floor((p.x - world_.min.x) / bucket_size_);
    const double by = std::floor((p.y - world_.min.y) / bucket_size_);
    return {std::min(static_cast<std::size_t>(std::max(bx, 0.0)), nx_ - 1),
            std::min(static_cast<std::size_t>(std::max(by, 0.0)), ny_ - 1)};
  }

  double column_width_;
  double bucket_size_;
  std::vector<Entry> entries_;
  Box2 world_;
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::uint32_t>> buckets_;
};

}  // namespace lanemap
