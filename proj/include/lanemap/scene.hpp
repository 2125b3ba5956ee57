#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lanemap/error.hpp"
#include "lanemap/frame.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/marking.hpp"
#include "lanemap/polygon.hpp"
#include "lanemap/rng.hpp"
#include "lanemap/road.hpp"

namespace lanemap {

struct LanePlacement {
  double station = 0.0;
  int lane = 0;
};

/// Box resting on the ground, placed relative to the road.
struct ObstacleSpec {
  double station = 0.0;
  double offset = 0.0;
  double yaw = 0.0;  ///< relative to the road heading at `station`
  double length = 4.5;
  double width = 1.8;
  double height = 1.5;
};

struct SceneSpec {
  std::vector<CenterlineSegment> centerline{{CenterlineSegment::Kind::straight, 100.0, 0.0}};
  Point2 origin{0.0, 0.0};
  double heading = 0.0;
  int lane_count = 2;
  double lane_width = 3.5;
  double mark_length = 2.0;
  double gap = 4.0;
  double line_width = 0.15;
  bool solid_left = true;
  bool solid_right = true;
  std::vector<LanePlacement> stop_lines;
  double stop_width = 0.40;
  std::vector<LanePlacement> arrows;
  double curb_height = 0.15;
  double shoulder = 0.5;
  std::vector<ObstacleSpec> obstacles;
  double dropout = 0.0;
  std::uint64_t seed = 1;
  int ego_lane = 0;
  double frame_spacing = 2.0;
  double speed = 10.0;

  double road_half_width() const { return 0.5 * lane_count * lane_width; }
  double curb_offset() const { return road_half_width() + shoulder; }
  /// Lateral offset of lane boundary i (0 = rightmost).
  double boundary_offset(int i) const { return -road_half_width() + i * lane_width; }
  double lane_center(int lane) const { return boundary_offset(lane) + 0.5 * lane_width; }
};

struct SensorModel {
  int ring_count = 64;
  double fov_min_deg = -24.9;
  double fov_max_deg = 2.0;
  double max_range = 40.0;
  double azimuth_step_deg = 0.4;
  double mount_height = 1.8;
  double asphalt_mean = 30.0;
  double asphalt_sigma = 8.0;
  double paint_mean = 180.0;
  double paint_sigma = 12.0;
  double range_noise = 0.03;
  double point_dropout = 0.0;

  /// Beam elevations in radians, ring 0 lowest.
  std::vector<double> elevations() const {
    std::vector<double> e(static_cast<std::size_t>(std::max(ring_count, 0)));
    const double lo = fov_min_deg * std::numbers::pi / 180.0;
    const double hi = fov_max_deg * std::numbers::pi / 180.0;
    for (int r = 0; r < ring_count; ++r) e[r] = lo + (hi - lo) * r / (ring_count - 1);
    return e;
  }

  void validate() const {
    if (ring_count < 2) throw Error(ErrorCode::spec_error, "ring_count must be at least 2");
    if (!(fov_max_deg > fov_min_deg)) throw Error(ErrorCode::spec_error, "vertical FOV is empty");
    if (!(max_range > 0.0)) throw Error(ErrorCode::spec_error, "max_range must be positive");
    if (!(azimuth_step_deg > 0.0)) throw Error(ErrorCode::spec_error, "azimuth step must be positive");
    if (!(mount_height > 0.0)) throw Error(ErrorCode::spec_error, "mount height must be positive");
    for (double m : {asphalt_mean, paint_mean}) {
      if (!(m >= 0.0 && m <= 255.0)) throw Error(ErrorCode::spec_error, "intensity means must lie in [0,255]");
    }
    if (asphalt_sigma < 0.0 || paint_sigma < 0.0 || range_noise < 0.0) {
      throw Error(ErrorCode::spec_error, "noise levels must be non-negative");
    }
    if (!(point_dropout >= 0.0 && point_dropout <= 1.0)) {
      throw Error(ErrorCode::spec_error, "point dropout must lie in [0,1]");
    }
  }
};

struct TruthMark {
  int id = 0;
  MarkType type = MarkType::other;
  int boundary = -1;  ///< lane-boundary index for dashed/solid marks
  int lane = -1;      ///< lane index for stop lines and arrows
  double station_begin = 0.0;
  double station_end = 0.0;
  bool present = true;  ///< false when worn away
  Polygon polygon;
};

struct TruthLane {
  int boundary = 0;
  MarkType type = MarkType::dashed;
  Polyline polyline;
};

struct GroundTruth {
  std::vector<TruthMark> marks;
  std::vector<TruthLane> lanes;
  Polyline left_curb;
  Polyline right_curb;

  std::size_t count(MarkType type, bool present_only = true) const {
    return static_cast<std::size_t>(std::count_if(marks.begin(), marks.end(), [&](const TruthMark& m) {
      return m.type == type && (m.present || !present_only);
    }));
  }
};

inline void validate(const SceneSpec& spec) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::spec_error, what); };
  if (spec.centerline.empty()) fail("centerline has no segments");
  double length = 0.0;
  for (const CenterlineSegment& s : spec.centerline) {
    if (!(s.length > 0.0)) fail("centerline segment length must be positive");
    if (s.kind == CenterlineSegment::Kind::arc && std::abs(s.radius) <= spec.curb_offset()) {
      fail("arc radius must exceed the curb offset");
    }
    length += s.length;
  }
  if (spec.lane_count < 1) fail("lane_count must be at least 1");
  if (!(spec.lane_width > 0.0)) fail("lane_width must be positive");
  if (!(spec.mark_length > 0.0) || !(spec.gap > 0.0)) fail("mark_length and gap must be positive");
  if (!(spec.line_width > 0.0) || !(spec.stop_width > 0.0)) fail("line widths must be positive");
  if (!(spec.dropout >= 0.0 && spec.dropout <= 1.0)) fail("dropout must lie in [0,1]");
  if (spec.curb_height < 0.0 || spec.shoulder < 0.0) fail("curb height and shoulder must be non-negative");
  if (spec.ego_lane < 0 || spec.ego_lane >= spec.lane_count) fail("ego_lane out of range");
  if (!(spec.frame_spacing > 0.0) || !(spec.speed > 0.0)) fail("frame_spacing and speed must be positive");
  for (const LanePlacement& p : spec.stop_lines) {
    if (p.station < 0.0 || p.station > length) fail("stop line beyond road length");
    if (p.lane < 0 || p.lane >= spec.lane_count) fail("stop line lane out of range");
  }
  for (const LanePlacement& p : spec.arrows) {
    if (p.station < 0.0 || p.station + 4.2 > length) fail("arrow beyond road length");
    if (p.lane < 0 || p.lane >= spec.lane_count) fail("arrow lane out of range");
  }
  for (const ObstacleSpec& o : spec.obstacles) {
    if (!(o.length > 0.0 && o.width > 0.0 && o.height > 0.0)) fail("obstacle dimensions must be positive");
    if (o.station < 0.0 || o.station > length) fail("obstacle beyond road length");
  }
}

inline RoadGeometry make_road(const SceneSpec& spec) { return RoadGeometry(spec.centerline, spec.origin, spec.heading); }

namespace detail {

// Strip between two offsets, sampled at most every 1 m of station.
inline Polygon strip_polygon(const RoadGeometry& road, double s0, double s1, double o0, double o1) {
  const int steps = std::max(1, static_cast<int>(std::ceil((s1 - s0) / 1.0)));
  Polygon poly;
  poly.reserve(2 * (steps + 1));
  for (int i = 0; i <= steps; ++i) poly.push_back(road.to_world(s0 + (s1 - s0) * i / steps, o0));
  for (int i = steps; i >= 0; --i) poly.push_back(road.to_world(s0 + (s1 - s0) * i / steps, o1));
  return poly;
}

inline Polyline offset_polyline(const RoadGeometry& road, double s0, double s1, double offset, double step) {
  const int n = std::max(1, static_cast<int>(std::ceil((s1 - s0) / step)));
  Polyline line;
  line.reserve(n + 1);
  for (int i = 0; i <= n; ++i) line.push_back(road.to_world(s0 + (s1 - s0) * i / n, offset));
  return line;
}

}  // namespace detail

/// Lays out every marking polygon and the true lane-boundary curves.
/// Deterministic for a given spec (dropout draws come from spec.seed).
inline GroundTruth build_scene(const SceneSpec& spec) {
  validate(spec);
  const RoadGeometry road = make_road(spec);
  const double length = road.length();
  const double hw = 0.5 * spec.line_width;
  GroundTruth truth;
  Rng rng(spec.seed);

  auto add = [&](MarkType type, int boundary, int lane, double s0, double s1, Polygon poly, bool wearable) {
    TruthMark m;
    m.id = static_cast<int>(truth.marks.size());
    m.type = type;
    m.boundary = boundary;
    m.lane = lane;
    m.station_begin = s0;
    m.station_end = s1;
    m.polygon = std::move(poly);
    if (wearable) m.present = !rng.bernoulli(spec.dropout);
    truth.marks.push_back(std::move(m));
  };

  auto near_stop = [&](int boundary, double s0, double s1) {
    for (const LanePlacement& p : spec.stop_lines) {
      if (boundary != p.lane && boundary != p.lane + 1) continue;
      if (s1 > p.station - 3.0 && s0 < p.station + 3.0) return true;
    }
    return false;
  };

  const double period = spec.mark_length + spec.gap;
  for (int b = 0; b <= spec.lane_count; ++b) {
    const double o = spec.boundary_offset(b);
    const bool edge = b == 0 || b == spec.lane_count;
    if (edge) {
      if ((b == 0 && spec.solid_right) || (b == spec.lane_count && spec.solid_left)) {
        add(MarkType::solid, b, -1, 0.0, length, detail::strip_polygon(road, 0.0, length, o - hw, o + hw), false);
        truth.lanes.push_back({b, MarkType::solid, detail::offset_polyline(road, 0.0, length, o, 0.1)});
      }
      continue;
    }
    for (double s0 = 0.0; s0 < length; s0 += period) {
      const double s1 = std::min(s0 + spec.mark_length, length);
      if (near_stop(b, s0, s1)) continue;
      add(MarkType::dashed, b, -1, s0, s1, detail::strip_polygon(road, s0, s1, o - hw, o + hw), true);
    }
    truth.lanes.push_back({b, MarkType::dashed, detail::offset_polyline(road, 0.0, length, o, 0.1)});
  }

  for (const LanePlacement& p : spec.stop_lines) {
    const double o0 = spec.boundary_offset(p.lane) + hw;
    const double o1 = spec.boundary_offset(p.lane + 1) - 0.3;
    const double s0 = p.station - 0.5 * spec.stop_width, s1 = p.station + 0.5 * spec.stop_width;
    Polygon poly{road.to_world(s0, o0), road.to_world(s1, o0), road.to_world(s1, o1), road.to_world(s0, o1)};
    add(MarkType::stop, -1, p.lane, s0, s1, std::move(poly), true);
  }

  static constexpr Point2 kArrow[] = {{0.0, -0.075}, {3.0, -0.075}, {3.0, -0.45}, {4.2, 0.0},
                                      {3.0, 0.45},   {3.0, 0.075},  {0.0, 0.075}};
  for (const LanePlacement& p : spec.arrows) {
    const double c = spec.lane_center(p.lane);
    Polygon poly;
    for (const Point2& q : kArrow) poly.push_back(road.to_world(p.station + q.x, c + q.y));
    add(MarkType::other, -1, p.lane, p.station, p.station + 4.2, std::move(poly), true);
  }

  truth.left_curb = detail::offset_polyline(road, -20.0, length + 20.0, spec.curb_offset(), 0.5);
  truth.right_curb = detail::offset_polyline(road, -20.0, length + 20.0, -spec.curb_offset(), 0.5);
  return truth;
}

/// Poses along the ego-lane center, one every frame_spacing meters.
inline std::vector<Pose> make_trajectory(const SceneSpec& spec, const SensorModel& sensor) {
  validate(spec);
  const RoadGeometry road = make_road(spec);
  const double offset = spec.lane_center(spec.ego_lane);
  std::vector<Pose> poses;
  for (int i = 0;; ++i) {
    const double s = i * spec.frame_spacing;
    if (s > road.length() + 1e-9) break;
    const Point2 p = road.to_world(s, offset);
    Pose pose;
    pose.position = {p.x, p.y, sensor.mount_height};
    pose.yaw = wrap_angle(road.at(s).heading);
    pose.timestamp = s / spec.speed;
    poses.push_back(pose);
  }
  return poses;
}

enum class Surface { road, sidewalk, curb, obstacle };

/// Provenance of a simulated return: what it hit and, for paint, which mark.
struct PointSource {
  Surface surface = Surface::road;
  int mark = -1;
  int obstacle = -1;
};

struct SimulatedSweep {
  LidarFrame frame;
  std::vector<PointSource> sources;  ///< parallel to frame.points
};

/// Ground-plane ray caster with curbs and box obstacles. Construction caches
/// the road geometry and a polygon index over the present marks.
class SweepSimulator {
 public:
  SweepSimulator(const GroundTruth& truth, const SceneSpec& spec, const SensorModel& sensor)
      : spec_(spec), sensor_(sensor), road_(make_road(spec)), elevations_(sensor.elevations()),
        locator_(present_polygons(truth)) {
    validate(spec);
    sensor.validate();
    for (const TruthMark& m : truth.marks) {
      if (m.present) mark_ids_.push_back(m.id);
    }
    for (const ObstacleSpec& o : spec.obstacles) {
      Box b;
      const Point2 c = road_.to_world(o.station, o.offset);
      b.center = {c.x, c.y};
      b.heading = road_.at(o.station).heading + o.yaw;
      b.half = {0.5 * o.length, 0.5 * o.width};
      b.height = o.height;
      boxes_.push_back(b);
    }
  }

  SimulatedSweep simulate(const Pose& pose, std::uint64_t frame_id) const {
    SimulatedSweep out;
    out.frame.frame_id = frame_id;
    out.frame.timestamp = pose.timestamp;
    Rng rng(splitmix64(spec_.seed ^ (frame_id * 0x9E3779B97F4A7C15ull)));
    const auto r = rotation_matrix(pose);
    const Point3 origin = pose.position;
    const bool on_road = std::abs(road_.project(planar(origin)).offset) <= spec_.curb_offset();
    const double step = sensor_.azimuth_step_deg * std::numbers::pi / 180.0;
    const int columns = static_cast<int>(std::floor(2.0 * std::numbers::pi / step + 1e-9));

    for (int ring = 0; ring < sensor_.ring_count; ++ring) {
      const double e = elevations_[ring];
      for (int col = 0; col < columns; ++col) {
        const double az = wrap_angle(col * step);
        const Point3 ds{std::cos(e) * std::cos(az), std::cos(e) * std::sin(az), std::sin(e)};
        const Point3 dw{r[0] * ds.x + r[1] * ds.y + r[2] * ds.z, r[3] * ds.x + r[4] * ds.y + r[5] * ds.z,
                        r[6] * ds.x + r[7] * ds.y + r[8] * ds.z};
        const std::optional<Hit> hit = cast(origin, dw, on_road);
        if (!hit || hit->t > sensor_.max_range) continue;
        if (sensor_.point_dropout > 0.0 && rng.bernoulli(sensor_.point_dropout)) continue;

        PointSource src{hit->surface, -1, hit->obstacle};
        double intensity = 0.0;
        if (hit->surface == Surface::road && on_road) {
          const Point2 ground{origin.x + hit->t * dw.x, origin.y + hit->t * dw.y};
          const int k = locator_.locate(ground);
          if (k >= 0) src.mark = mark_ids_[k];
        }
        if (src.mark >= 0) {
          intensity = rng.normal(sensor_.paint_mean, sensor_.paint_sigma);
        } else {
          intensity = rng.normal(sensor_.asphalt_mean, sensor_.asphalt_sigma);
        }
        const double range = sensor_.range_noise > 0.0 ? hit->t + rng.normal(0.0, sensor_.range_noise) : hit->t;

        ScanPoint p;
        p.position = {range * ds.x, range * ds.y, range * ds.z};
        p.intensity = std::clamp(std::round(intensity), 0.0, 255.0);
        p.ring = ring;
        p.azimuth = az;
        out.frame.points.push_back(p);
        out.sources.push_back(src);
      }
    }
    return out;
  }

 private:
  struct Box {
    Point2 center;
    double heading = 0.0;
    Point2 half;
    double height = 0.0;
  };

  struct Hit {
    double t = 0.0;  ///< 3D range along the unit ray
    Surface surface = Surface::road;
    int obstacle = -1;
  };

  static std::vector<Polygon> present_polygons(const GroundTruth& truth) {
    std::vector<Polygon> polys;
    for (const TruthMark& m : truth.marks) {
      if (m.present) polys.push_back(m.polygon);
    }
    return polys;
  }

  std::optional<Hit> cast(Point3 o, Point3 d, bool on_road) const {
    std::optional<Hit> best;
    const double c = std::hypot(d.x, d.y);
    if (d.z < 0.0) {
      const double t_ground = -o.z / d.z;
      best = Hit{t_ground, Surface::road, -1};
      if (on_road && c > 0.0 && spec_.curb_height > 0.0) {
        const UnitVector2 h = UnitVector2::from(d.x, d.y);
        const double reach = std::min(t_ground, sensor_.max_range) * c;
        std::optional<double> rho;
        for (double off : {spec_.curb_offset(), -spec_.curb_offset()}) {
          const auto x = road_.first_crossing(planar(o), h, reach, off);
          if (x && (!rho || *x < *rho)) rho = x;
        }
        if (rho) {
          const double tc = *rho / c;
          const double zc = o.z + tc * d.z;
          if (zc <= spec_.curb_height) {
            best = Hit{tc, Surface::curb, -1};
          } else {
            best = Hit{(spec_.curb_height - o.z) / d.z, Surface::sidewalk, -1};
          }
        }
      }
    }
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      const auto t = box_hit(boxes_[i], o, d);
      if (t && (!best || *t < best->t)) best = Hit{*t, Surface::obstacle, static_cast<int>(i)};
    }
    return best;
  }

  // Slab test in the box frame; rays starting inside a box ignore it.
  static std::optional<double> box_hit(const Box& b, Point3 o, Point3 d) {
    const double cs = std::cos(b.heading), sn = std::sin(b.heading);
    const Point2 rel{o.x - b.center.x, o.y - b.center.y};
    const double lo[3] = {cs * rel.x + sn * rel.y, -sn * rel.x + cs * rel.y, o.z};
    const double ld[3] = {cs * d.x + sn * d.y, -sn * d.x + cs * d.y, d.z};
    const double mn[3] = {-b.half.x, -b.half.y, 0.0};
    const double mx[3] = {b.half.x, b.half.y, b.height};
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    bool inside = true;
    for (int k = 0; k < 3; ++k) {
      if (lo[k] < mn[k] || lo[k] > mx[k]) inside = false;
      if (ld[k] == 0.0) {
        if (lo[k] < mn[k] || lo[k] > mx[k]) return std::nullopt;
        continue;
      }
      double ta = (mn[k] - lo[k]) / ld[k], tb = (mx[k] - lo[k]) / ld[k];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return std::nullopt;
    }
    if (inside || !(t0 > 0.0)) return std::nullopt;
    return t0;
  }

  SceneSpec spec_;
  SensorModel sensor_;
  RoadGeometry road_;
  std::vector<double> elevations_;
  PolygonLocator locator_;
  std::vector<int> mark_ids_;
  std::vector<Box> boxes_;
};

inline SimulatedSweep simulate_sweep(const GroundTruth& truth, const SceneSpec& spec, const SensorModel& sensor,
                                     const Pose& pose, std::uint64_t frame_id = 0) {
  return SweepSimulator(truth, spec, sensor).simulate(pose, frame_id);
}

}  // namespace lanemap
