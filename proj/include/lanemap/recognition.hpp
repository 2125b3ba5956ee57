#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "lanemap/accumulate.hpp"
#include "lanemap/clustering.hpp"
#include "lanemap/error.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/marking.hpp"

namespace lanemap {

struct ShapeThresholds {
  double dash_length_min = 1.0;
  double dash_length_max = 8.0;
  double dash_width_max = 0.45;
  double dash_aspect_min = 4.0;
  double solid_length_min = 10.0;
  double solid_width_max = 0.6;
  double solid_aspect_min = 15.0;

  void validate() const {
    for (double v : {dash_length_min, dash_length_max, dash_width_max, dash_aspect_min, solid_length_min,
                     solid_width_max, solid_aspect_min}) {
      if (!(v > 0.0)) throw Error(ErrorCode::config_error, "shape thresholds must be positive");
    }
    if (!(dash_length_max < solid_length_min)) {
      throw Error(ErrorCode::config_error, "dash length max must be below solid length min");
    }
  }
};

/// Cosine bounds: solid when alpha_d < |cos| <= alpha_u, stop when beta_d <= |cos| < beta_u.
struct AngleGates {
  double alpha_d = 0.90;
  double alpha_u = 1.0;
  double beta_d = 0.0;
  double beta_u = 0.20;

  void validate() const {
    if (!(0.0 <= beta_d && beta_d < beta_u && beta_u <= alpha_d && alpha_d < alpha_u && alpha_u <= 1.0)) {
      throw Error(ErrorCode::config_error, "angle gates must satisfy 0 <= beta_d < beta_u <= alpha_d < alpha_u <= 1");
    }
  }
  bool solid(double c) const { return alpha_d < c && c <= alpha_u; }
  bool stop(double c) const { return beta_d <= c && c < beta_u; }
};

struct RecognitionParams {
  ShapeThresholds shape;
  AngleGates gates;
  double window = 1.5;           ///< meters
  double neighbor_radius = 15.0; ///< reach for the reference dash

  void validate() const {
    shape.validate();
    gates.validate();
    if (!(window > 0.0)) throw Error(ErrorCode::config_error, "recognition window must be positive");
  }
};

enum class ShapeClass { dashed, solid_candidate, other };

inline ShapeClass classify_by_mbr(const Mbr& mbr, const ShapeThresholds& th = {}) {
  const double length = mbr.length(), width = mbr.width();
  if (!(width > 0.0) || !std::isfinite(length)) return ShapeClass::other;
  const double aspect = length / width;
  if (length >= th.dash_length_min && length <= th.dash_length_max && width <= th.dash_width_max &&
      aspect >= th.dash_aspect_min) {
    return ShapeClass::dashed;
  }
  if (length >= th.solid_length_min && (width <= th.solid_width_max || aspect >= th.solid_aspect_min)) {
    return ShapeClass::solid_candidate;
  }
  return ShapeClass::other;
}

inline ShapeClass classify_by_mbr(const MarkCluster& c, const ShapeThresholds& th = {}) {
  return classify_by_mbr(c.mbr, th);
}

struct DashFeature {
  Point2 midpoint;
  UnitVector2 direction;
};

/// Centroid of the member centers and the principal eigenvector about it.
/// Throws AmbiguousDirection for isotropic clusters.
inline DashFeature dash_feature(std::span<const Point2> centers) {
  const Point2 m = centroid(centers);
  return {m, principal_eigenvector(centers, m)};
}

struct ClassifiedCluster {
  MarkCluster base;
  MarkType label = MarkType::other;
  std::optional<DashFeature> feature;  ///< set for dashed
};

struct WindowLabel {
  double station = 0.0;  ///< sample position along the skeleton
  MarkType label = MarkType::other;  ///< other = unassigned
  double abs_cos = 0.0;
};

struct SplitResult {
  std::vector<WindowLabel> windows;
  std::vector<std::pair<MarkType, std::vector<std::size_t>>> segments;  ///< member indices, ascending
};

namespace detail {

/// Long, lane-parallel clusters whose MBR is inflated by road curvature.
inline bool thin_along_road(const MarkCluster& c, const RasterGrid& grid, const TrajectoryField& field,
                            const ShapeThresholds& th) {
  if (c.mbr.length() < th.solid_length_min) return false;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Point2 p : c.centers) {
    const double s = field.station(p);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double span = hi - lo + grid.resolution;
  const double area = static_cast<double>(c.cells.size()) * grid.resolution * grid.resolution;
  return span >= th.solid_length_min && area / span <= th.solid_width_max;
}

}  // namespace detail

/// Splits a solid candidate into solid and stop runs by comparing each
/// window's principal direction with the reference direction there.
/// `skeleton[i]` is member i's position along the candidate.
template <class Reference>
SplitResult split_solid_stop(std::span<const Point2> centers, std::span<const double> skeleton, Reference&& reference,
                             const RecognitionParams& params, double resolution) {
  SplitResult out;
  const std::size_t n = centers.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n == 0) return out;
  const auto [lo_it, hi_it] = std::minmax_element(skeleton.begin(), skeleton.end());
  const double lo = *lo_it, hi = *hi_it;
  const double half = 0.5 * params.window;
  if (hi - lo < params.window) {
    out.segments.push_back({MarkType::solid, all});
    return out;
  }

  // Members ordered by skeleton coordinate for window scans.
  std::vector<std::size_t> order = all;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return skeleton[a] < skeleton[b]; });
  const std::size_t windows = static_cast<std::size_t>(std::floor((hi - lo) / half)) + 1;
  std::vector<Point2> pts;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < windows; ++k) {
    const double s = lo + static_cast<double>(k) * half;
    while (begin < n && skeleton[order[begin]] < s - half) ++begin;
    pts.clear();
    for (std::size_t q = begin; q < n && skeleton[order[q]] <= s + half; ++q) pts.push_back(centers[order[q]]);
    WindowLabel w{s, MarkType::other, 0.0};
    if (pts.size() >= 2) {
      try {
        const Point2 c = centroid(pts);
        const UnitVector2 v = principal_eigenvector(pts, c);
        w.abs_cos = abs_cos(v, reference(c));
        if (params.gates.solid(w.abs_cos)) {
          w.label = MarkType::solid;
        } else if (params.gates.stop(w.abs_cos)) {
          w.label = MarkType::stop;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ambiguous_direction) throw;
      }
    }
    out.windows.push_back(w);
  }

  // Runs of equal labels; unassigned runs join the larger neighbor (earlier on ties).
  struct Run {
    MarkType label;
    std::size_t first, last;
  };
  std::vector<Run> runs;
  for (std::size_t k = 0; k < windows; ++k) {
    if (!runs.empty() && runs.back().label == out.windows[k].label) {
      runs.back().last = k;
    } else {
      runs.push_back({out.windows[k].label, k, k});
    }
  }
  if (std::all_of(runs.begin(), runs.end(), [](const Run& r) { return r.label == MarkType::other; })) {
    out.segments.push_back({MarkType::solid, all});
    return out;
  }
  std::vector<MarkType> window_label(windows);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    MarkType label = runs[r].label;
    if (label == MarkType::other) {
      const Run* prev = nullptr;
      const Run* next = nullptr;
      for (std::size_t q = r; q-- > 0;) {
        if (runs[q].label != MarkType::other) {
          prev = &runs[q];
          break;
        }
      }
      for (std::size_t q = r + 1; q < runs.size(); ++q) {
        if (runs[q].label != MarkType::other) {
          next = &runs[q];
          break;
        }
      }
      auto size = [](const Run* x) { return x ? x->last - x->first + 1 : 0; };
      label = (size(prev) >= size(next) ? prev : next)->label;
    }
    for (std::size_t k = runs[r].first; k <= runs[r].last; ++k) window_label[k] = label;
  }

  // Each member takes the label of its nearest sample.
  std::vector<std::size_t> window_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = std::round((skeleton[i] - lo) / half);
    window_of[i] = std::min(windows - 1, static_cast<std::size_t>(std::max(0.0, k)));
  }

  // Stop runs give back members lying on the solid line that passes through them.
  std::vector<MarkType> member_label(n);
  for (std::size_t i = 0; i < n; ++i) member_label[i] = window_label[window_of[i]];
  for (std::size_t k = 0; k < windows;) {
    if (window_label[k] != MarkType::stop) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < windows && window_label[e + 1] == MarkType::stop) ++e;
    const double s0 = lo + static_cast<double>(k) * half, s1 = lo + static_cast<double>(e) * half;
    std::vector<Point2> solid_near;
    for (std::size_t i = 0; i < n; ++i) {
      if (member_label[i] == MarkType::solid && skeleton[i] >= s0 - 2.0 * params.window &&
          skeleton[i] <= s1 + 2.0 * params.window) {
        solid_near.push_back(centers[i]);
      }
    }
    if (solid_near.size() >= 2) {
      try {
        const Point2 c = centroid(solid_near);
        const UnitVector2 axis = principal_eigenvector(solid_near, c);
        const UnitVector2 normal = axis.left_normal();
        double band = 0.0;
        for (Point2 p : solid_near) band = std::max(band, std::abs(dot(p - c, normal.vec())));
        band += 0.5 * resolution;
        for (std::size_t i = 0; i < n; ++i) {
          if (member_label[i] == MarkType::stop && window_of[i] >= k && window_of[i] <= e &&
              std::abs(dot(centers[i] - c, normal.vec())) <= band) {
            member_label[i] = MarkType::solid;
          }
        }
      } catch (const Error& ex) {
        if (ex.code() != ErrorCode::ambiguous_direction) throw;
      }
    }
    k = e + 1;
  }

  // Contiguous runs along the skeleton become segments; given-back solid
  // members join the solid run on their side of the stop.
  std::vector<int> segment_of_window(windows, -1);
  std::vector<MarkType> seg_label;
  for (std::size_t k = 0; k < windows; ++k) {
    if (k == 0 || window_label[k] != window_label[k - 1]) seg_label.push_back(window_label[k]);
    segment_of_window[k] = static_cast<int>(seg_label.size()) - 1;
  }
  std::vector<double> seg_lo(seg_label.size(), std::numeric_limits<double>::infinity());
  std::vector<double> seg_hi(seg_label.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < windows; ++k) {
    const std::size_t g = static_cast<std::size_t>(segment_of_window[k]);
    seg_lo[g] = std::min(seg_lo[g], lo + static_cast<double>(k) * half);
    seg_hi[g] = std::max(seg_hi[g], lo + static_cast<double>(k) * half);
  }
  std::vector<std::vector<std::size_t>> members(seg_label.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t seg = static_cast<std::size_t>(segment_of_window[window_of[i]]);
    if (member_label[i] != seg_label[seg]) {
      const bool first_half = skeleton[i] < 0.5 * (seg_lo[seg] + seg_hi[seg]);
      const bool has_prev = seg > 0 && seg_label[seg - 1] == member_label[i];
      const bool has_next = seg + 1 < seg_label.size() && seg_label[seg + 1] == member_label[i];
      if (has_prev && (first_half || !has_next)) {
        seg -= 1;
      } else if (has_next) {
        seg += 1;
      }
    }
    members[seg].push_back(i);
  }
  for (std::size_t g = 0; g < seg_label.size(); ++g) {
    if (!members[g].empty()) out.segments.push_back({seg_label[g], std::move(members[g])});
  }
  return out;
}

/// Labels every cluster. Solid candidates are split into solid and stop
/// pieces; output ids are reassigned in (input id, piece) order.
inline std::vector<ClassifiedCluster> classify_clusters(std::span<const MarkCluster> clusters, const RasterImage& img,
                                                        const TrajectoryField& field,
                                                        const RecognitionParams& params = {}) {
  params.validate();
  std::vector<ShapeClass> shape(clusters.size());
  std::vector<bool> curved(clusters.size(), false);
  std::vector<DashFeature> dashes;
  std::vector<std::optional<DashFeature>> feature(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    shape[i] = classify_by_mbr(clusters[i], params.shape);
    if (shape[i] == ShapeClass::other && detail::thin_along_road(clusters[i], img.grid, field, params.shape)) {
      shape[i] = ShapeClass::solid_candidate;
      curved[i] = true;
    }
    if (shape[i] == ShapeClass::dashed) {
      try {
        feature[i] = dash_feature(clusters[i].centers);
        dashes.push_back(*feature[i]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ambiguous_direction) throw;
        shape[i] = ShapeClass::other;
      }
    }
  }
  std::vector<Point2> mids;
  for (const DashFeature& d : dashes) mids.push_back(d.midpoint);
  const PointIndex dash_index(mids, params.neighbor_radius);
  auto reference = [&](Point2 p) {
    if (const auto k = dash_index.nearest(p)) return dashes[*k].direction;
    return field.at(p).driving;
  };

  std::vector<ClassifiedCluster> out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const MarkCluster& c = clusters[i];
    if (shape[i] != ShapeClass::solid_candidate) {
      ClassifiedCluster cc{c, shape[i] == ShapeClass::dashed ? MarkType::dashed : MarkType::other, feature[i]};
      cc.base.id = static_cast<int>(out.size());
      out.push_back(std::move(cc));
      continue;
    }
    std::vector<double> skeleton(c.centers.size());
    const UnitVector2 axis = c.mbr.axis();
    for (std::size_t k = 0; k < c.centers.size(); ++k) {
      skeleton[k] = curved[i] ? field.station(c.centers[k]) : dot(c.centers[k] - c.mbr.center, axis.vec());
    }
    const SplitResult split = split_solid_stop(c.centers, skeleton, reference, params, img.grid.resolution);
    for (const auto& [label, idx] : split.segments) {
      std::vector<std::size_t> cells;
      cells.reserve(idx.size());
      for (std::size_t k : idx) cells.push_back(c.cells[k]);
      ClassifiedCluster cc{detail::make_cluster(static_cast<int>(out.size()), std::move(cells), img), label, {}};
      out.push_back(std::move(cc));
    }
  }
  return out;
}

/// Colorized raster: green dashed, magenta solid, red stop, blue other,
/// gray for occupied cells outside any cluster. Top row = largest y.
inline void write_ppm(std::ostream& os, const RasterImage& img, std::span<const ClassifiedCluster> clusters) {
  static constexpr std::array<std::array<unsigned char, 3>, 4> palette{
      {{0, 255, 0}, {255, 0, 255}, {255, 0, 0}, {0, 0, 255}}};
  std::vector<int> label(img.grid.size(), -1);
  for (const ClassifiedCluster& c : clusters) {
    for (std::size_t i : c.base.cells) label[i] = static_cast<int>(index_of(c.label));
  }
  os << "P6\n" << img.grid.width << ' ' << img.grid.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(img.grid.width) * 3);
  for (int r = img.grid.height - 1; r >= 0; --r) {
    for (int c = 0; c < img.grid.width; ++c) {
      const std::size_t i = img.grid.index({c, r});
      std::array<unsigned char, 3> rgb{0, 0, 0};
      if (label[i] >= 0) {
        rgb = palette[static_cast<std::size_t>(label[i])];
      } else if (img.occupied(i)) {
        rgb = {96, 96, 96};
      }
      for (int ch = 0; ch < 3; ++ch) row[static_cast<std::size_t>(c) * 3 + ch] = static_cast<char>(rgb[ch]);
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace lanemap
