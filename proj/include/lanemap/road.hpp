#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "lanemap/error.hpp"
#include "lanemap/geometry.hpp"

namespace lanemap {

struct CenterlineSegment {
  enum class Kind { straight, arc };
  Kind kind = Kind::straight;
  double length = 100.0;
  double radius = 0.0;  ///< arcs only; positive turns left
};

/// Road centerline built from straight and circular pieces, with straight
/// lead-in/lead-out extensions so curbs continue past both ends.
///
/// Stations are arc length along the centerline (0 at the road start);
/// offsets are lateral, positive to the left of travel.
class RoadGeometry {
 public:
  struct Sample {
    Point2 position;
    double heading = 0.0;
  };

  struct RoadCoord {
    double station = 0.0;
    double offset = 0.0;
    double distance = 0.0;  ///< distance to the foot on the centerline
  };

  RoadGeometry(const std::vector<CenterlineSegment>& segments, Point2 origin, double heading,
               double extension = 60.0)
  {
    Point2 p = origin - extension * Point2{std::cos(heading), std::sin(heading)};
    double h = heading;
    double s = -extension;
    auto push = [&](double len, double kappa) {
      Piece piece{s, len, kappa, p, h};
      pieces_.push_back(piece);
      const Sample end = eval(piece, len);
      p = end.position;
      h = end.heading;
      s += len;
    };
    push(extension, 0.0);
    for (const CenterlineSegment& seg : segments) {
      if (!(seg.length > 0.0)) throw Error(ErrorCode::spec_error, "centerline segment length must be positive");
      if (seg.kind == CenterlineSegment::Kind::arc) {
        if (seg.radius == 0.0 || !std::isfinite(seg.radius)) {
          throw Error(ErrorCode::spec_error, "arc segment needs a finite non-zero radius");
        }
        push(seg.length, 1.0 / seg.radius);
      } else {
        push(seg.length, 0.0);
      }
      length_ += seg.length;
    }
    push(extension, 0.0);
  }

  double length() const { return length_; }

  /// Position and heading at a station; stations beyond the extensions clamp.
  Sample at(double station) const {
    const Piece& piece = piece_at(station);
    return eval(piece, std::clamp(station - piece.s0, 0.0, piece.length));
  }

  Point2 to_world(double station, double offset) const {
    const Sample s = at(station);
    return s.position + offset * Point2{-std::sin(s.heading), std::cos(s.heading)};
  }

  /// Smallest planar distance t in (0, max_t] at which the ray origin + t*dir
  /// meets the curve at constant lateral `offset`.
  std::optional<double> first_crossing(Point2 origin, UnitVector2 dir, double max_t, double offset) const {
    double best = std::numeric_limits<double>::infinity();
    const Point2 d = dir.vec();
    for (const Piece& piece : pieces_) {
      const Point2 n0{-std::sin(piece.heading0), std::cos(piece.heading0)};
      if (piece.kappa == 0.0) {
        const Point2 t0{std::cos(piece.heading0), std::sin(piece.heading0)};
        const Point2 b = piece.start + offset * n0;
        const double denom = cross(d, t0);
        if (denom == 0.0) continue;
        const double t = cross(b - origin, t0) / denom;
        const double u = cross(b - origin, d) / denom;
        if (t > 0.0 && t <= max_t && u >= 0.0 && u <= piece.length) best = std::min(best, t);
        continue;
      }
      const Point2 c = piece.start + (1.0 / piece.kappa) * n0;
      const double r = std::abs(1.0 / piece.kappa - offset);
      const Point2 oc = origin - c;
      const double half_b = dot(d, oc);
      const double disc = half_b * half_b - (dot(oc, oc) - r * r);
      if (disc < 0.0) continue;
      const double root = std::sqrt(disc);
      for (double t : {-half_b - root, -half_b + root}) {
        if (!(t > 0.0 && t <= max_t) || t >= best) continue;
        const Point2 x = origin + t * d;
        if (arc_station(piece, x) <= piece.length) best = t;
      }
    }
    if (std::isfinite(best)) return best;
    return std::nullopt;
  }

  /// Nearest centerline coordinates of a world point.
  RoadCoord project(Point2 p) const {
    RoadCoord best;
    best.distance = std::numeric_limits<double>::infinity();
    for (const Piece& piece : pieces_) {
      double u = 0.0;
      if (piece.kappa == 0.0) {
        const Point2 t0{std::cos(piece.heading0), std::sin(piece.heading0)};
        u = std::clamp(dot(p - piece.start, t0), 0.0, piece.length);
      } else {
        u = arc_station(piece, p);
        if (u > piece.length) {
          // Outside the arc's angular range: nearer of the two ends.
          const double period = 2.0 * std::numbers::pi / std::abs(piece.kappa);
          u = (u - piece.length < period - u) ? piece.length : 0.0;
        }
      }
      const Sample s = eval(piece, u);
      const Point2 n{-std::sin(s.heading), std::cos(s.heading)};
      const Point2 d = p - s.position;
      const double dist = norm(d);
      if (dist < best.distance) best = {piece.s0 + u, dot(d, n), dist};
    }
    return best;
  }

 private:
  struct Piece {
    double s0;
    double length;
    double kappa;
    Point2 start;
    double heading0;
  };

  static Sample eval(const Piece& piece, double u) {
    if (piece.kappa == 0.0) {
      return {piece.start + u * Point2{std::cos(piece.heading0), std::sin(piece.heading0)}, piece.heading0};
    }
    const double h = piece.heading0 + piece.kappa * u;
    return {piece.start + (1.0 / piece.kappa) * Point2{std::sin(h) - std::sin(piece.heading0),
                                                        std::cos(piece.heading0) - std::cos(h)},
            h};
  }

  // Arc-length position in [0, 2pi/|kappa|) of the radial through x.
  static double arc_station(const Piece& piece, Point2 x) {
    const Point2 n0{-std::sin(piece.heading0), std::cos(piece.heading0)};
    const Point2 c = piece.start + (1.0 / piece.kappa) * n0;
    // On the offset curve x - c = (1/kappa - offset) * (sin h, -cos h).
    const Point2 w = x - c;
    const double sgn = piece.kappa > 0.0 ? -1.0 : 1.0;
    const double h = std::atan2(-sgn * w.x, sgn * w.y);
    double delta = (h - piece.heading0) * (piece.kappa > 0.0 ? 1.0 : -1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    delta = std::fmod(delta, two_pi);
    if (delta < 0.0) delta += two_pi;
    return delta / std::abs(piece.kappa);
  }

  const Piece& piece_at(double station) const {
    for (const Piece& p : pieces_) {
      if (station < p.s0 + p.length) return p;
    }
    return pieces_.back();
  }

  double length_ = 0.0;
  std::vector<Piece> pieces_;
};

}  // namespace lanemap
