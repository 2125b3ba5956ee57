#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lanemap/error.hpp"
#include "lanemap/frame.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/rng.hpp"

namespace lanemap {

/// How the between-class variance measures class spread: around the global
/// histogram mean, or around the candidate threshold itself.
enum class OtsuObjective { global_mean, threshold_literal };

inline OtsuObjective parse_objective(const std::string& s) {
  if (s == "global_mean") return OtsuObjective::global_mean;
  if (s == "threshold_literal") return OtsuObjective::threshold_literal;
  throw Error(ErrorCode::config_error, "unknown extraction objective '" + s + "'");
}

inline const char* to_string(OtsuObjective o) {
  return o == OtsuObjective::global_mean ? "global_mean" : "threshold_literal";
}

struct ExtractionParams {
  std::vector<double> radial_breaks{5.0, 10.0, 20.0};  ///< band edges; the last band is open
  int angular_sectors = 8;
  int rough_threshold = 60;
  std::size_t min_count = 50;
  OtsuObjective objective = OtsuObjective::global_mean;
  std::optional<int> fixed_threshold;  ///< bypasses Otsu (baseline mode)
  std::uint64_t seed = 1;

  int radial_bands() const { return static_cast<int>(radial_breaks.size()) + 1; }
  int sector_count() const { return radial_bands() * angular_sectors; }

  void validate() const {
    if (angular_sectors < 1) throw Error(ErrorCode::config_error, "angular_sectors must be at least 1");
    for (std::size_t i = 0; i < radial_breaks.size(); ++i) {
      if (!(radial_breaks[i] > 0.0) || (i > 0 && !(radial_breaks[i] > radial_breaks[i - 1]))) {
        throw Error(ErrorCode::config_error, "radial breaks must be positive and increasing");
      }
    }
    if (rough_threshold < 0 || rough_threshold > 255) throw Error(ErrorCode::config_error, "rough_threshold out of range");
  }
};

struct SectorPartition {
  int radial = 0;
  int angular = 0;
  std::vector<int> sector;  ///< per point: band * angular + wedge

  int count() const { return radial * angular; }
};

/// Fan-shaped sectors around the vehicle: radial band by range, wedge by azimuth.
inline SectorPartition partition_sectors(std::span<const Point2> points, Point2 vehicle, const ExtractionParams& params) {
  params.validate();
  SectorPartition part;
  part.radial = params.radial_bands();
  part.angular = params.angular_sectors;
  part.sector.reserve(points.size());
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const Point2& p : points) {
    const Point2 d = p - vehicle;
    const double r = norm(d);
    int band = 0;
    while (band < static_cast<int>(params.radial_breaks.size()) && r >= params.radial_breaks[band]) ++band;
    double a = std::atan2(d.y, d.x);
    if (a < 0.0) a += two_pi;
    int wedge = static_cast<int>(a / (two_pi / params.angular_sectors));
    wedge = std::min(wedge, params.angular_sectors - 1);
    part.sector.push_back(band * params.angular_sectors + wedge);
  }
  return part;
}

struct IntensityHistogram {
  std::array<std::uint64_t, 256> bins{};
  std::uint64_t total = 0;

  void add(double intensity, std::uint64_t count = 1) {
    const int b = std::clamp(static_cast<int>(std::floor(intensity)), 0, 255);
    bins[b] += count;
    total += count;
  }
};

struct RoughFilterResult {
  IntensityHistogram histogram;
  std::vector<std::size_t> kept;     ///< indices (into the sector input) at or above the rough threshold
  std::vector<std::size_t> sampled;  ///< matched sample of rejected indices
};

/// Rough threshold plus an equal-size seeded sample of the rejected points.
/// Returns nullopt (SectorSkipped) when nothing passes or the sector is too sparse.
inline std::optional<RoughFilterResult> rough_filter(std::span<const double> intensities, int rough_threshold,
                                                     std::size_t min_count, Rng& rng) {
  RoughFilterResult r;
  std::vector<std::size_t> rejected;
  for (std::size_t i = 0; i < intensities.size(); ++i) {
    (intensities[i] >= rough_threshold ? r.kept : rejected).push_back(i);
  }
  if (r.kept.empty() || intensities.size() < min_count) return std::nullopt;
  const std::size_t take = std::min(r.kept.size(), rejected.size());
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(rejected.size() - k));
    std::swap(rejected[k], rejected[j]);
  }
  r.sampled.assign(rejected.begin(), rejected.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(r.sampled.begin(), r.sampled.end());
  for (std::size_t i : r.kept) r.histogram.add(intensities[i]);
  for (std::size_t i : r.sampled) r.histogram.add(intensities[i]);
  return r;
}

struct OtsuResult {
  int threshold = 0;
  double sigma_b = 0.0;
  double p1 = 0.0, p2 = 0.0;  ///< class fractions (class 1 = bins >= threshold)
  double m1 = 0.0, m2 = 0.0;  ///< class mean levels
};

/// Exhaustive scan of the 255 cuts t = 1..255; class 1 = {level >= t}.
/// Ties go to the smallest t. Returns nullopt (NoSeparation) when fewer
/// than two bins are occupied.
inline std::optional<OtsuResult> otsu_threshold(const IntensityHistogram& h,
                                                OtsuObjective objective = OtsuObjective::global_mean) {
  int occupied = 0;
  std::uint64_t n = 0, s = 0;
  for (int i = 0; i < 256; ++i) {
    occupied += h.bins[i] > 0;
    n += h.bins[i];
    s += h.bins[i] * static_cast<std::uint64_t>(i);
  }
  if (occupied < 2) return std::nullopt;
  const double nd = static_cast<double>(n);
  const double global = static_cast<double>(s) / nd;

  std::optional<OtsuResult> best;
  std::uint64_t n2 = 0, s2 = 0;
  for (int t = 1; t < 256; ++t) {
    n2 += h.bins[t - 1];
    s2 += h.bins[t - 1] * static_cast<std::uint64_t>(t - 1);
    const std::uint64_t n1 = n - n2, s1 = s - s2;
    if (n1 == 0 || n2 == 0) continue;
    const double p1 = static_cast<double>(n1) / nd, p2 = static_cast<double>(n2) / nd;
    const double m1 = static_cast<double>(s1) / static_cast<double>(n1);
    const double m2 = static_cast<double>(s2) / static_cast<double>(n2);
    const double mg = objective == OtsuObjective::global_mean ? global : static_cast<double>(t);
    const double sigma = p1 * (m1 - mg) * (m1 - mg) + p2 * (m2 - mg) * (m2 - mg);
    if (!best || sigma > best->sigma_b) best = OtsuResult{t, sigma, p1, p2, m1, m2};
  }
  return best;
}

enum class SectorStatus { ok, skipped, no_separation, fixed };

inline const char* to_string(SectorStatus s) {
  switch (s) {
    case SectorStatus::ok: return "ok";
    case SectorStatus::skipped: return "skipped";
    case SectorStatus::no_separation: return "no_separation";
    case SectorStatus::fixed: return "fixed";
  }
  return "ok";
}

struct SectorThreshold {
  int sector = 0;
  SectorStatus status = SectorStatus::skipped;
  int threshold = 256;  ///< 256 means the sector yields nothing
  double sigma_b = 0.0;
};

/// A point is a marking point iff its intensity reaches its sector's threshold.
inline std::vector<std::size_t> extract_markings(const SectorPartition& part, std::span<const double> intensities,
                                                 std::span<const SectorThreshold> thresholds) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < intensities.size(); ++i) {
    const SectorThreshold& t = thresholds[static_cast<std::size_t>(part.sector[i])];
    if (t.status != SectorStatus::ok && t.status != SectorStatus::fixed) continue;
    if (intensities[i] >= t.threshold) out.push_back(i);
  }
  return out;
}

struct FrameExtraction {
  std::vector<std::size_t> markings;  ///< indices into the frame's points
  std::vector<SectorThreshold> sectors;
};

/// Sector thresholds and marking points for the selected points of one frame
/// (sensor frame, vehicle at the origin).
inline FrameExtraction extract_frame(const LidarFrame& frame, std::span<const std::size_t> selected,
                                     const ExtractionParams& params) {
  std::vector<Point2> pts;
  std::vector<double> intensity;
  pts.reserve(selected.size());
  intensity.reserve(selected.size());
  for (std::size_t i : selected) {
    pts.push_back(planar(frame.points[i].position));
    intensity.push_back(frame.points[i].intensity);
  }
  const SectorPartition part = partition_sectors(pts, {0.0, 0.0}, params);

  FrameExtraction out;
  out.sectors.resize(static_cast<std::size_t>(part.count()));
  std::vector<std::vector<double>> members(out.sectors.size());
  for (std::size_t k = 0; k < pts.size(); ++k) members[part.sector[k]].push_back(intensity[k]);
  for (int sec = 0; sec < part.count(); ++sec) {
    SectorThreshold& st = out.sectors[sec];
    st.sector = sec;
    if (params.fixed_threshold) {
      st.status = SectorStatus::fixed;
      st.threshold = *params.fixed_threshold;
      continue;
    }
    Rng rng(splitmix64(params.seed ^ splitmix64(frame.frame_id * 1000003ull + static_cast<std::uint64_t>(sec))));
    const auto rough = rough_filter(members[sec], params.rough_threshold, params.min_count, rng);
    if (!rough) continue;
    const auto otsu = otsu_threshold(rough->histogram, params.objective);
    if (!otsu) {
      st.status = SectorStatus::no_separation;
      continue;
    }
    st.status = SectorStatus::ok;
    // markings are refined from the rough candidates, never below them
    st.threshold = std::max(otsu->threshold, params.rough_threshold);
    st.sigma_b = otsu->sigma_b;
  }
  for (std::size_t k : extract_markings(part, intensity, out.sectors)) out.markings.push_back(selected[k]);
  return out;
}

}  // namespace lanemap
