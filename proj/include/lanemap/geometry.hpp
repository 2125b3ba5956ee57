#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "lanemap/error.hpp"

namespace lanemap {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Point2, Point2) = default;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr bool operator==(Point3, Point3) = default;
};

using Polyline = std::vector<Point2>;

inline constexpr double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline constexpr double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline double distance(Point3 a, Point3 b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}
inline Point2 planar(Point3 p) { return {p.x, p.y}; }
inline bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }
inline bool is_finite(Point3 p) { return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z); }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Unit-length planar direction.
class UnitVector2 {
 public:
  constexpr UnitVector2() = default;

  /// Normalizes (dx, dy). Throws on a zero or non-finite vector.
  static UnitVector2 from(double dx, double dy) {
    const double n = std::hypot(dx, dy);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::invalid_input, "cannot normalize a zero or non-finite vector");
    }
    UnitVector2 u;
    u.dx_ = dx / n;
    u.dy_ = dy / n;
    return u;
  }
  static UnitVector2 from(Point2 v) { return from(v.x, v.y); }
  static UnitVector2 from_angle(double radians) {
    UnitVector2 u;
    u.dx_ = std::cos(radians);
    u.dy_ = std::sin(radians);
    return u;
  }

  constexpr double dx() const { return dx_; }
  constexpr double dy() const { return dy_; }
  constexpr Point2 vec() const { return {dx_, dy_}; }
  double angle() const { return std::atan2(dy_, dx_); }
  constexpr UnitVector2 flipped() const { return raw(-dx_, -dy_); }
  /// Rotated by +90 degrees.
  constexpr UnitVector2 left_normal() const { return raw(-dy_, dx_); }

 private:
  static constexpr UnitVector2 raw(double dx, double dy) {
    UnitVector2 u;
    u.dx_ = dx;
    u.dy_ = dy;
    return u;
  }
  double dx_ = 1.0;
  double dy_ = 0.0;
};

/// |cos| of the angle between two directions; insensitive to either sign.
inline double abs_cos(UnitVector2 a, UnitVector2 b) {
  return std::min(1.0, std::abs(a.dx() * b.dx() + a.dy() * b.dy()));
}

struct Pose {
  Point3 position;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double timestamp = 0.0;
};

/// Row-major rotation R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline std::array<double, 9> rotation_matrix(const Pose& pose) {
  const double cr = std::cos(pose.roll), sr = std::sin(pose.roll);
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  return {cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
          sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
          -sp,     cp * sr,                cp * cr};
}

namespace detail {
inline void check_pose(const Pose& pose) {
  if (!is_finite(pose.position) || !std::isfinite(pose.roll) || !std::isfinite(pose.pitch) ||
      !std::isfinite(pose.yaw)) {
    throw Error(ErrorCode::invalid_input, "pose has non-finite components");
  }
}
}  // namespace detail

/// Rigid sensor-to-world transform: rotate by the pose attitude, then translate.
inline std::vector<Point3> transform_to_world(std::span<const Point3> points, const Pose& pose) {
  detail::check_pose(pose);
  const auto r = rotation_matrix(pose);
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const Point3& p : points) {
    if (!is_finite(p)) throw Error(ErrorCode::invalid_input, "frame contains a non-finite point");
    out.push_back({r[0] * p.x + r[1] * p.y + r[2] * p.z + pose.position.x,
                   r[3] * p.x + r[4] * p.y + r[5] * p.z + pose.position.y,
                   r[6] * p.x + r[7] * p.y + r[8] * p.z + pose.position.z});
  }
  return out;
}

/// Inverse of transform_to_world.
inline std::vector<Point3> transform_to_sensor(std::span<const Point3> points, const Pose& pose) {
  detail::check_pose(pose);
  const auto r = rotation_matrix(pose);
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const Point3& w : points) {
    if (!is_finite(w)) throw Error(ErrorCode::invalid_input, "non-finite point");
    const Point3 d = w - pose.position;
    out.push_back({r[0] * d.x + r[3] * d.y + r[6] * d.z,
                   r[1] * d.x + r[4] * d.y + r[7] * d.z,
                   r[2] * d.x + r[5] * d.y + r[8] * d.z});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convex hull and minimum bounding rectangle

/// Counter-clockwise hull without collinear points (Andrew's monotone chain).
inline std::vector<Point2> convex_hull(std::span<const Point2> input) {
  std::vector<Point2> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point2& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    const Point2& p = pts[i];
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

/// Oriented rectangle. The long axis points along `orientation` in [0, pi).
struct Mbr {
  Point2 center;
  double half_length = 0.0;
  double half_width = 0.0;
  double orientation = 0.0;

  double length() const { return 2.0 * half_length; }
  double width() const { return 2.0 * half_width; }
  double aspect_ratio() const { return half_length / half_width; }
  double area() const { return 4.0 * half_length * half_width; }
  UnitVector2 axis() const { return UnitVector2::from_angle(orientation); }

  /// Local (along, across) coordinates of p.
  Point2 to_local(Point2 p) const {
    const Point2 d = p - center;
    const double c = std::cos(orientation), s = std::sin(orientation);
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }

  /// Positive inside, negative outside, zero on the boundary.
  double signed_distance(Point2 p) const {
    const Point2 l = to_local(p);
    const double ox = std::abs(l.x) - half_length;
    const double oy = std::abs(l.y) - half_width;
    if (ox > 0.0 || oy > 0.0) return -std::hypot(std::max(ox, 0.0), std::max(oy, 0.0));
    return -std::max(ox, oy);
  }

  bool contains(Point2 p, double tol = 1e-9) const { return signed_distance(p) >= -tol; }

  std::array<Point2, 4> corners() const {
    const Point2 u{std::cos(orientation), std::sin(orientation)};
    const Point2 v{-u.y, u.x};
    return {center + half_length * u + half_width * v, center - half_length * u + half_width * v,
            center - half_length * u - half_width * v, center + half_length * u - half_width * v};
  }
};

/// Minimum-area enclosing rectangle by rotating calipers over the hull.
/// Throws DegenerateGeometry for fewer than three points or a collinear set.
inline Mbr minimum_bounding_rectangle(std::span<const Point2> points) {
  if (points.size() < 3) throw Error(ErrorCode::degenerate_geometry, "fewer than three points");
  for (const Point2& p : points) {
    if (!is_finite(p)) throw Error(ErrorCode::invalid_input, "non-finite point");
  }
  const std::vector<Point2> hull = convex_hull(points);
  if (hull.size() < 3) throw Error(ErrorCode::degenerate_geometry, "points are collinear");
  double extent = 0.0;
  for (const Point2& p : hull) extent = std::max(extent, distance(p, hull.front()));
  double twice_area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) twice_area += cross(hull[i], hull[(i + 1) % hull.size()]);
  if (std::abs(twice_area) <= 1e-12 * extent * extent) {
    throw Error(ErrorCode::degenerate_geometry, "points are collinear");
  }

  const std::size_t n = hull.size();
  auto edge_dir = [&](std::size_t i) {
    const Point2 e = hull[(i + 1) % n] - hull[i];
    return (1.0 / norm(e)) * e;
  };
  // Calipers: right = max projection on edge, top = max along normal, left = min on edge.
  std::size_t right = 0, top = 0, left = 0;
  double best_area = std::numeric_limits<double>::infinity();
  Mbr best;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 u = edge_dir(i);
    const Point2 v{-u.y, u.x};
    if (i == 0) {
      right = top = left = 0;
      for (std::size_t j = 1; j < n; ++j) {
        if (dot(hull[j], u) > dot(hull[right], u)) right = j;
        if (dot(hull[j], v) > dot(hull[top], v)) top = j;
        if (dot(hull[j], u) < dot(hull[left], u)) left = j;
      }
    } else {
      while (dot(hull[(right + 1) % n], u) > dot(hull[right], u)) right = (right + 1) % n;
      while (dot(hull[(top + 1) % n], v) > dot(hull[top], v)) top = (top + 1) % n;
      while (dot(hull[(left + 1) % n], u) < dot(hull[left], u)) left = (left + 1) % n;
    }
    const double u_min = dot(hull[left], u), u_max = dot(hull[right], u);
    const double v_min = dot(hull[i], v), v_max = dot(hull[top], v);
    const double area = (u_max - u_min) * (v_max - v_min);
    if (area < best_area) {
      best_area = area;
      const double cu = 0.5 * (u_min + u_max), cv = 0.5 * (v_min + v_max);
      best.center = cu * u + cv * v;
      double hl = 0.5 * (u_max - u_min), hw = 0.5 * (v_max - v_min);
      double angle = std::atan2(u.y, u.x);
      if (hw > hl) {
        std::swap(hl, hw);
        angle += 0.5 * std::numbers::pi;
      }
      angle = std::fmod(angle, std::numbers::pi);
      if (angle < 0.0) angle += std::numbers::pi;
      if (angle >= std::numbers::pi) angle -= std::numbers::pi;
      best.half_length = hl;
      best.half_width = hw;
      best.orientation = angle;
    }
  }
  return best;
}

/// Gap between two rectangles (0 when they overlap).
inline double rectangle_gap(const Mbr& a, const Mbr& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  for (const Point2& p : ca) {
    if (b.contains(p, 0.0)) return 0.0;
  }
  for (const Point2& p : cb) {
    if (a.contains(p, 0.0)) return 0.0;
  }
  double gap = std::numeric_limits<double>::infinity();
  for (const Point2& p : ca) gap = std::min(gap, -b.signed_distance(p));
  for (const Point2& p : cb) gap = std::min(gap, -a.signed_distance(p));
  // Crossing edges with no corner inside (a "plus" configuration).
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const Point2 p = ca[i], r = ca[(i + 1) % 4] - ca[i];
      const Point2 q = cb[j], s = cb[(j + 1) % 4] - cb[j];
      const double denom = cross(r, s);
      if (denom == 0.0) continue;
      const double t = cross(q - p, s) / denom;
      const double w = cross(q - p, r) / denom;
      if (t >= 0.0 && t <= 1.0 && w >= 0.0 && w <= 1.0) return 0.0;
    }
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Covariance eigenvector

struct Covariance2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;
};

/// C = (1/n) sum (p_i - anchor)(p_i - anchor)^T.
inline Covariance2 anchored_covariance(std::span<const Point2> points, Point2 anchor) {
  Covariance2 c;
  for (const Point2& p : points) {
    const Point2 d = p - anchor;
    c.xx += d.x * d.x;
    c.xy += d.x * d.y;
    c.yy += d.y * d.y;
  }
  const double inv = 1.0 / static_cast<double>(points.size());
  c.xx *= inv;
  c.xy *= inv;
  c.yy *= inv;
  return c;
}

struct EigenPair2 {
  double value = 0.0;
  UnitVector2 vector;
};

/// Major eigenpair of a symmetric 2x2 matrix, sign-normalized so dx > 0
/// (or dy > 0 when dx == 0). Throws AmbiguousDirection when isotropic.
inline EigenPair2 major_eigenpair(const Covariance2& c) {
  const double half_trace = 0.5 * (c.xx + c.yy);
  const double half_diff = 0.5 * (c.xx - c.yy);
  const double radius = std::hypot(half_diff, c.xy);
  const double trace = c.xx + c.yy;
  if (!(trace > 0.0) || 2.0 * radius < 1e-12 * trace) {
    throw Error(ErrorCode::ambiguous_direction, "covariance is isotropic");
  }
  const double lambda = half_trace + radius;
  // Pick the better-conditioned of the two equivalent null-space rows.
  Point2 v = (c.xx >= c.yy) ? Point2{lambda - c.yy, c.xy} : Point2{c.xy, lambda - c.xx};
  UnitVector2 u = UnitVector2::from(v);
  if (u.dx() < 0.0 || (u.dx() == 0.0 && u.dy() < 0.0)) u = u.flipped();
  return {lambda, u};
}

/// Eigenvector of the anchored covariance for the larger eigenvalue.
inline UnitVector2 principal_eigenvector(std::span<const Point2> points, Point2 anchor) {
  if (points.size() < 2) throw Error(ErrorCode::invalid_input, "need at least two points");
  return major_eigenpair(anchored_covariance(points, anchor)).vector;
}

inline Point2 centroid(std::span<const Point2> points) {
  Point2 c;
  for (const Point2& p : points) c = c + p;
  return (1.0 / static_cast<double>(points.size())) * c;
}

// ---------------------------------------------------------------------------
// Polylines

struct SegmentProjection {
  double distance = 0.0;
  double t = 0.0;  ///< Foot parameter on the segment, clamped to [0, 1].
  Point2 foot;
};

inline SegmentProjection project_to_segment(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Point2 foot = a + t * ab;
  return {distance(p, foot), t, foot};
}

struct PolylineProjection {
  double distance = std::numeric_limits<double>::infinity();
  std::size_t segment = 0;
  double t = 0.0;
  double station = 0.0;  ///< Arc length from the first vertex to the foot.
  bool interior = false; ///< Foot is strictly inside the polyline's extent.
};

inline PolylineProjection project_to_polyline(Point2 p, std::span<const Point2> line) {
  PolylineProjection best;
  if (line.empty()) return best;
  if (line.size() == 1) {
    best.distance = distance(p, line[0]);
    return best;
  }
  double walked = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const SegmentProjection s = project_to_segment(p, line[i], line[i + 1]);
    const double len = distance(line[i], line[i + 1]);
    if (s.distance < best.distance) {
      best.distance = s.distance;
      best.segment = i;
      best.t = s.t;
      best.station = walked + s.t * len;
    }
    walked += len;
  }
  const bool at_start = best.segment == 0 && best.t <= 0.0;
  const bool at_end = best.segment + 2 == line.size() && best.t >= 1.0;
  best.interior = !at_start && !at_end;
  return best;
}

inline double polyline_length(std::span<const Point2> line) {
  double s = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) s += distance(line[i - 1], line[i]);
  return s;
}

}  // namespace lanemap
