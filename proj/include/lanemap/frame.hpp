#pragma once

#include <cstdint>
#include <vector>

#include "lanemap/geometry.hpp"

namespace lanemap {

/// One lidar return in the sensor frame.
struct ScanPoint {
  Point3 position;
  double intensity = 0.0;  ///< 0..255
  int ring = 0;            ///< 0 is the lowest (steepest) beam
  double azimuth = 0.0;    ///< radians, counter-clockwise from the sensor x axis
};

/// One sweep of a ring-structured lidar.
struct LidarFrame {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  std::vector<ScanPoint> points;
};

}  // namespace lanemap
