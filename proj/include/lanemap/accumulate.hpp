#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "lanemap/error.hpp"
#include "lanemap/frame.hpp"
#include "lanemap/geometry.hpp"

namespace lanemap {

/// A vehicle pose tagged with the frame it was recorded for.
struct PoseRecord {
  std::uint64_t frame_id = 0;
  Pose pose;
};

/// A marking point in world coordinates.
struct CloudPoint {
  Point3 position;
  double intensity = 0.0;
  std::uint64_t frame_id = 0;
};

/// Index of the pose nearest in time to `timestamp`, if within `tolerance`.
/// Poses must be sorted by timestamp; a tie goes to the earlier pose.
inline std::optional<std::size_t> match_pose(std::span<const PoseRecord> poses, double timestamp,
                                             double tolerance = 0.1) {
  if (poses.empty()) return std::nullopt;
  const auto it = std::lower_bound(poses.begin(), poses.end(), timestamp,
                                   [](const PoseRecord& p, double t) { return p.pose.timestamp < t; });
  std::size_t best = static_cast<std::size_t>(it - poses.begin());
  if (best == poses.size()) {
    best = poses.size() - 1;
  } else if (best > 0 &&
             timestamp - poses[best - 1].pose.timestamp <= poses[best].pose.timestamp - timestamp) {
    --best;
  }
  if (!(std::abs(poses[best].pose.timestamp - timestamp) <= tolerance)) return std::nullopt;
  return best;
}

inline std::vector<CloudPoint> transform_frame(const LidarFrame& frame, const Pose& pose) {
  std::vector<Point3> local;
  local.reserve(frame.points.size());
  for (const ScanPoint& p : frame.points) local.push_back(p.position);
  const std::vector<Point3> world = transform_to_world(local, pose);
  std::vector<CloudPoint> out;
  out.reserve(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) out.push_back({world[i], frame.points[i].intensity, frame.frame_id});
  return out;
}

/// Dense world cloud built frame by frame.
class CloudAccumulator {
 public:
  explicit CloudAccumulator(std::span<const PoseRecord> poses, double tolerance = 0.1)
      : poses_(poses.begin(), poses.end()), tolerance_(tolerance) {
    std::stable_sort(poses_.begin(), poses_.end(),
                     [](const PoseRecord& a, const PoseRecord& b) { return a.pose.timestamp < b.pose.timestamp; });
  }

  /// Returns false (and counts the frame as dropped) when no pose matches.
  bool add(const LidarFrame& frame) {
    const auto k = match_pose(poses_, frame.timestamp, tolerance_);
    if (!k) {
      ++dropped_;
      return false;
    }
    std::vector<CloudPoint> pts = transform_frame(frame, poses_[*k].pose);
    cloud_.insert(cloud_.end(), pts.begin(), pts.end());
    return true;
  }

  void append(std::span<const CloudPoint> points) { cloud_.insert(cloud_.end(), points.begin(), points.end()); }
  void count_dropped() { ++dropped_; }

  const std::vector<CloudPoint>& cloud() const { return cloud_; }
  std::vector<CloudPoint> release() { return std::move(cloud_); }
  std::size_t dropped() const { return dropped_; }
  std::span<const PoseRecord> poses() const { return poses_; }

 private:
  std::vector<PoseRecord> poses_;
  double tolerance_;
  std::vector<CloudPoint> cloud_;
  std::size_t dropped_ = 0;
};

struct Accumulation {
  std::vector<CloudPoint> cloud;
  std::size_t dropped_frames = 0;
};

inline Accumulation accumulate_frames(std::span<const LidarFrame> frames, std::span<const PoseRecord> poses,
                                      double tolerance = 0.1) {
  CloudAccumulator acc(poses, tolerance);
  for (const LidarFrame& f : frames) acc.add(f);
  return {acc.release(), acc.dropped()};
}

/// Cell (col, row); row grows with world y.
struct Cell {
  int col = 0;
  int row = 0;
  friend bool operator==(Cell, Cell) = default;
};

struct RasterGrid {
  Point2 origin;  ///< world position of the (0, 0) cell corner
  double resolution = 0.1;
  int width = 0;
  int height = 0;

  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool in_bounds(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < width && c.row < height; }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.col);
  }
  Cell cell_at(std::size_t index) const {
    return {static_cast<int>(index % static_cast<std::size_t>(width)),
            static_cast<int>(index / static_cast<std::size_t>(width))};
  }
  Cell cell_of(Point2 p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
            static_cast<int>(std::floor((p.y - origin.y) / resolution))};
  }
  Point2 center(Cell c) const {
    return {origin.x + (c.col + 0.5) * resolution, origin.y + (c.row + 0.5) * resolution};
  }
};

/// Occupancy raster with exact (order-independent) intensity means.
struct RasterImage {
  RasterGrid grid;
  int min_hits = 2;
  std::vector<std::uint32_t> hits;
  std::vector<std::int64_t> intensity_milli;  ///< sum of round(1000 * intensity)

  bool occupied(Cell c) const { return grid.in_bounds(c) && hits[grid.index(c)] >= static_cast<std::uint32_t>(min_hits); }
  bool occupied(std::size_t i) const { return hits[i] >= static_cast<std::uint32_t>(min_hits); }
  double mean_intensity(std::size_t i) const {
    return hits[i] ? static_cast<double>(intensity_milli[i]) / (1000.0 * hits[i]) : 0.0;
  }
  std::uint64_t total_hits() const {
    std::uint64_t n = 0;
    for (std::uint32_t h : hits) n += h;
    return n;
  }
  std::size_t occupied_count() const {
    return static_cast<std::size_t>(std::count_if(hits.begin(), hits.end(), [&](std::uint32_t h) {
      return h >= static_cast<std::uint32_t>(min_hits);
    }));
  }
};

/// Grid covering the cloud's bounding box padded by one cell, aligned to
/// multiples of the resolution.
inline RasterGrid grid_for(std::span<const CloudPoint> cloud, double resolution) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::config_error, "raster resolution must be positive");
  if (cloud.empty()) throw Error(ErrorCode::invalid_input, "cannot rasterize an empty cloud");
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  for (const CloudPoint& p : cloud) {
    x0 = std::min(x0, p.position.x);
    y0 = std::min(y0, p.position.y);
    x1 = std::max(x1, p.position.x);
    y1 = std::max(y1, p.position.y);
  }
  RasterGrid g;
  g.resolution = resolution;
  g.origin = {(std::floor(x0 / resolution) - 1.0) * resolution, (std::floor(y0 / resolution) - 1.0) * resolution};
  g.width = g.cell_of({x1, y1}).col + 2;
  g.height = g.cell_of({x1, y1}).row + 2;
  return g;
}

/// Bins the cloud into `grid`; points outside it are ignored.
inline RasterImage rasterize(std::span<const CloudPoint> cloud, const RasterGrid& grid, int min_hits = 2) {
  if (min_hits < 1) throw Error(ErrorCode::config_error, "min_hits must be at least 1");
  RasterImage img;
  img.grid = grid;
  img.min_hits = min_hits;
  img.hits.assign(grid.size(), 0);
  img.intensity_milli.assign(grid.size(), 0);
  for (const CloudPoint& p : cloud) {
    const Cell c = grid.cell_of(planar(p.position));
    if (!grid.in_bounds(c)) continue;
    const std::size_t i = grid.index(c);
    ++img.hits[i];
    img.intensity_milli[i] += std::llround(p.intensity * 1000.0);
  }
  return img;
}

inline RasterImage rasterize(std::span<const CloudPoint> cloud, double resolution = 0.1, int min_hits = 2) {
  return rasterize(cloud, grid_for(cloud, resolution), min_hits);
}

/// Binary graymap, top row = largest y; byte = 255 * hits / max hits.
inline void write_pgm(std::ostream& os, const RasterImage& img) {
  std::uint32_t max_hits = 0;
  for (std::uint32_t h : img.hits) max_hits = std::max(max_hits, h);
  os << "P5\n" << img.grid.width << ' ' << img.grid.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(img.grid.width));
  for (int r = img.grid.height - 1; r >= 0; --r) {
    for (int c = 0; c < img.grid.width; ++c) {
      const std::uint64_t h = img.hits[img.grid.index({c, r})];
      row[static_cast<std::size_t>(c)] = static_cast<char>(max_hits ? 255 * h / max_hits : 0);
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

struct DrivingFrame {
  UnitVector2 driving;
  UnitVector2 transverse;  ///< driving rotated +90 degrees
};

/// Local road axes from the recorded trajectory.
class TrajectoryField {
 public:
  explicit TrajectoryField(std::span<const PoseRecord> poses) : poses_(poses.begin(), poses.end()) {
    if (poses_.empty()) throw Error(ErrorCode::invalid_input, "trajectory field needs at least one pose");
    std::stable_sort(poses_.begin(), poses_.end(),
                     [](const PoseRecord& a, const PoseRecord& b) { return a.frame_id < b.frame_id; });
    for (const PoseRecord& r : poses_) path_.push_back(planar(r.pose.position));
  }

  /// Pose nearest to p; equidistant poses resolve to the earlier frame.
  std::size_t nearest(Point2 p) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poses_.size(); ++i) {
      const Point2 d = planar(poses_[i].pose.position) - p;
      const double d2 = dot(d, d);
      if (d2 < best_d) {
        best_d = d2;
        best = i;
      }
    }
    return best;
  }

  DrivingFrame at(Point2 p) const {
    const UnitVector2 u = UnitVector2::from_angle(poses_[nearest(p)].pose.yaw);
    return {u, u.left_normal()};
  }

  /// Arc length of p's foot on the trajectory polyline.
  double station(Point2 p) const { return project_to_polyline(p, path_).station; }

  std::span<const PoseRecord> poses() const { return poses_; }
  const Polyline& path() const { return path_; }

 private:
  std::vector<PoseRecord> poses_;
  Polyline path_;
};

inline DrivingFrame driving_frame_at(Point2 p, std::span<const PoseRecord> poses) { return TrajectoryField(poses).at(p); }

}  // namespace lanemap
