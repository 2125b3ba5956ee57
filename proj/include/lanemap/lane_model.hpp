#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lanemap/accumulate.hpp"
#include "lanemap/clustering.hpp"
#include "lanemap/error.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/marking.hpp"
#include "lanemap/recognition.hpp"

namespace lanemap {

struct PredictionParams {
  double d0 = 6.0;  ///< dash center-to-center period, meters
  double lambda = 2.0;
  double w_theta = 0.10;
  double h_theta = 0.50;
  std::size_t window = 5;  ///< N recent dashes for the size statistics
  double accept_threshold = 0.5;
  int max_skip = 1;

  void validate() const {
    if (!(d0 > 0.0)) throw Error(ErrorCode::config_error, "d0 must be positive");
    if (!(lambda >= 0.0) || !(w_theta >= 0.0) || !(h_theta >= 0.0)) {
      throw Error(ErrorCode::config_error, "lambda and margins must be non-negative");
    }
    if (window < 1) throw Error(ErrorCode::config_error, "prediction window must be at least 1");
    if (max_skip < 0) throw Error(ErrorCode::config_error, "max_skip must be non-negative");
  }
};

/// Rectangle where the next dash is expected.
struct PredictionRegion {
  Point2 center;
  double width = 0.0;   ///< across the direction
  double length = 0.0;  ///< along the direction
  UnitVector2 direction;

  bool contains(Point2 p) const {
    const Point2 d = p - center;
    return std::abs(dot(d, direction.vec())) <= 0.5 * length &&
           std::abs(dot(d, direction.left_normal().vec())) <= 0.5 * width;
  }
};

/// Sample standard deviation (N - 1); zero for fewer than two values.
inline double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Next-dash region from the previous dash midpoint and direction; `skip`
/// extra periods bridge worn dashes.
inline PredictionRegion predict_next_region(Point2 prev_midpoint, UnitVector2 direction, std::span<const double> widths,
                                            std::span<const double> lengths, const PredictionParams& params,
                                            int skip = 0) {
  if (widths.empty() || lengths.empty()) throw Error(ErrorCode::invalid_input, "empty dash statistics window");
  PredictionRegion r;
  r.center = prev_midpoint + (params.d0 * (1 + skip)) * direction.vec();
  r.width = mean_of(widths) + params.lambda * sample_stddev(widths) + params.w_theta;
  r.length = mean_of(lengths) + params.lambda * sample_stddev(lengths) + params.h_theta;
  r.direction = direction;
  return r;
}

/// (2 N_m N_b - N_b^2) / N_m^2 for a candidate of N_m cells with N_b inside.
inline double association_score(std::size_t n_mi, std::size_t n_bi) {
  if (n_mi == 0) throw Error(ErrorCode::invalid_input, "empty association candidate");
  const double m = static_cast<double>(n_mi), b = static_cast<double>(n_bi);
  return (2.0 * m * b - b * b) / (m * m);
}

inline double association_score(std::span<const Point2> candidate, const PredictionRegion& region) {
  std::size_t inside = 0;
  for (Point2 p : candidate) inside += region.contains(p);
  return association_score(candidate.size(), inside);
}

struct LaneLineObject {
  int id = 0;
  MarkType type = MarkType::dashed;
  std::vector<int> members;     ///< classified cluster ids, in travel order
  std::vector<Point2> points;   ///< skeleton, in travel order
};

struct ChainParams {
  PredictionParams prediction;
  double skeleton_step = 0.1;  ///< station slice for the point skeleton
  bool include_stop_lines = true;
};

namespace detail {

struct DashNode {
  const ClassifiedCluster* cluster;
  UnitVector2 direction;  ///< feature direction oriented with travel
  double station;
  double width, length;
};

/// Cluster centers averaged per station slice, in station order.
inline std::vector<Point2> skeleton_points(std::span<const Point2> centers, const TrajectoryField& field, double step) {
  std::map<std::int64_t, std::pair<Point2, int>> slices;
  for (Point2 p : centers) {
    auto& [sum, n] = slices[static_cast<std::int64_t>(std::floor(field.station(p) / step))];
    sum = sum + p;
    ++n;
  }
  std::vector<Point2> out;
  out.reserve(slices.size());
  for (const auto& [k, v] : slices) out.push_back((1.0 / v.second) * v.first);
  return out;
}

}  // namespace detail

/// Chains dashes into lane lines by predicted regions. Chains start from
/// dashes that no other dash predicts and grow in lockstep rounds; a dash
/// wanted by several chains goes to the higher score, ties to the chain with
/// the smaller seed id. Solid (and optionally stop) clusters become
/// single-member objects. Ids follow (dashed chains by seed, then others by
/// cluster id).
inline std::vector<LaneLineObject> chain_dashes(std::span<const ClassifiedCluster> clusters,
                                                const TrajectoryField& field, const ChainParams& params = {}) {
  const PredictionParams& pp = params.prediction;
  pp.validate();
  std::vector<detail::DashNode> dashes;
  for (const ClassifiedCluster& c : clusters) {
    if (c.label != MarkType::dashed || !c.feature) continue;
    UnitVector2 dir = c.feature->direction;
    if (dot(dir.vec(), field.at(c.feature->midpoint).driving.vec()) < 0.0) dir = dir.flipped();
    dashes.push_back({&c, dir, field.station(c.feature->midpoint), c.base.mbr.width(), c.base.mbr.length()});
  }
  std::stable_sort(dashes.begin(), dashes.end(), [](const detail::DashNode& a, const detail::DashNode& b) {
    return a.cluster->base.id < b.cluster->base.id;
  });
  const std::size_t n = dashes.size();
  std::vector<Point2> mids(n);
  for (std::size_t i = 0; i < n; ++i) mids[i] = dashes[i].cluster->feature->midpoint;
  const double reach = pp.d0 * (pp.max_skip + 1) + 20.0;
  const PointIndex index(mids, reach);

  // Best candidate for a chain ending at `last` with the given statistics.
  auto best_next = [&](std::size_t last, std::span<const double> widths, std::span<const double> lengths,
                       const std::vector<char>& taken) -> std::optional<std::pair<std::size_t, double>> {
    const std::vector<std::size_t> near = index.within(mids[last], reach);
    for (int skip = 0; skip <= pp.max_skip; ++skip) {
      const PredictionRegion region =
          predict_next_region(mids[last], dashes[last].direction, widths, lengths, pp, skip);
      std::optional<std::pair<std::size_t, double>> best;
      for (std::size_t j : near) {
        if (j == last || taken[j]) continue;
        const double score = association_score(dashes[j].cluster->base.centers, region);
        if (score < pp.accept_threshold) continue;
        if (!best || score > best->second) best = {{j, score}};
      }
      if (best) return best;
    }
    return std::nullopt;
  };

  std::vector<char> has_pred(n, 0);
  {
    const std::vector<char> none(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = dashes[i].width, l = dashes[i].length;
      if (const auto nx = best_next(i, std::span(&w, 1), std::span(&l, 1), none)) has_pred[nx->first] = 1;
    }
  }

  struct Chain {
    std::vector<std::size_t> members;
    bool active = true;
  };
  std::vector<Chain> chains;
  std::vector<char> taken(n, 0);
  std::size_t remaining = n;
  while (remaining > 0) {
    // Seeds: untaken dashes without a predecessor, or the earliest one left.
    std::vector<std::size_t> seeds;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && !has_pred[i]) seeds.push_back(i);
    }
    if (seeds.empty()) {
      std::size_t first = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && (first == n || dashes[i].station < dashes[first].station)) first = i;
      }
      seeds.push_back(first);
    }
    const std::size_t base = chains.size();
    for (std::size_t s : seeds) {
      taken[s] = 1;
      --remaining;
      chains.push_back({{s}, true});
    }
    for (;;) {
      std::map<std::size_t, std::pair<double, std::size_t>> claims;  // dash -> (score, chain)
      for (std::size_t c = base; c < chains.size(); ++c) {
        if (!chains[c].active) continue;
        const auto& m = chains[c].members;
        std::vector<double> widths, lengths;
        for (std::size_t k = m.size() > pp.window ? m.size() - pp.window : 0; k < m.size(); ++k) {
          widths.push_back(dashes[m[k]].width);
          lengths.push_back(dashes[m[k]].length);
        }
        const auto nx = best_next(m.back(), widths, lengths, taken);
        if (!nx) {
          chains[c].active = false;
          continue;
        }
        const auto it = claims.find(nx->first);
        if (it == claims.end() || nx->second > it->second.first) claims[nx->first] = {nx->second, c};
      }
      if (claims.empty()) break;
      for (const auto& [dash, claim] : claims) {
        taken[dash] = 1;
        --remaining;
        chains[claim.second].members.push_back(dash);
      }
    }
  }

  std::vector<LaneLineObject> out;
  for (const Chain& c : chains) {
    LaneLineObject obj;
    obj.id = static_cast<int>(out.size());
    obj.type = MarkType::dashed;
    std::vector<Point2> centers;
    for (std::size_t k : c.members) {
      obj.members.push_back(dashes[k].cluster->base.id);
      centers.insert(centers.end(), dashes[k].cluster->base.centers.begin(), dashes[k].cluster->base.centers.end());
    }
    obj.points = detail::skeleton_points(centers, field, params.skeleton_step);
    out.push_back(std::move(obj));
  }
  for (const ClassifiedCluster& c : clusters) {
    if (c.label != MarkType::solid && !(params.include_stop_lines && c.label == MarkType::stop)) continue;
    LaneLineObject obj;
    obj.id = static_cast<int>(out.size());
    obj.type = c.label;
    obj.members = {c.base.id};
    if (c.label == MarkType::stop) {
      // ordered across the road, along the stop line's own axis
      std::vector<std::pair<double, Point2>> along;
      for (Point2 p : c.base.centers) along.push_back({dot(p - c.base.mbr.center, c.base.mbr.axis().vec()), p});
      std::map<std::int64_t, std::pair<Point2, int>> slices;
      for (const auto& [t, p] : along) {
        auto& [sum, k] = slices[static_cast<std::int64_t>(std::floor(t / params.skeleton_step))];
        sum = sum + p;
        ++k;
      }
      for (const auto& [k, v] : slices) obj.points.push_back((1.0 / v.second) * v.first);
    } else {
      obj.points = detail::skeleton_points(c.base.centers, field, params.skeleton_step);
    }
    out.push_back(std::move(obj));
  }
  return out;
}

/// Cumulative chord length from the first point, after dropping coincident
/// consecutive points. Throws TooFewPoints below four distinct points.
struct ArcSamples {
  std::vector<Point2> points;
  std::vector<double> s;
};

inline ArcSamples parameterize_arclength(std::span<const Point2> points) {
  ArcSamples out;
  for (Point2 p : points) {
    if (!out.points.empty() && distance(out.points.back(), p) <= 1e-12) continue;
    out.s.push_back(out.points.empty() ? 0.0 : out.s.back() + distance(out.points.back(), p));
    out.points.push_back(p);
  }
  if (out.points.size() < 4) throw Error(ErrorCode::too_few_points, "need at least four distinct points");
  return out;
}

struct CurvePiece {
  double s_t = 0.0;
  double s_end = 0.0;
  std::array<double, 4> px{};  ///< X(s) = sum px[r] (s - s_t)^r
  std::array<double, 4> py{};

  Point2 eval(double s) const {
    const double u = s - s_t;
    return {px[0] + u * (px[1] + u * (px[2] + u * px[3])), py[0] + u * (py[1] + u * (py[2] + u * py[3]))};
  }
};

struct LaneCurve {
  std::vector<CurvePiece> pieces;

  double s_begin() const { return pieces.empty() ? 0.0 : pieces.front().s_t; }
  double s_end() const { return pieces.empty() ? 0.0 : pieces.back().s_end; }

  /// L(s) from the piece whose domain [s_t, s_end) holds s (the last piece is closed).
  Point2 eval(double s) const {
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const CurvePiece& p = pieces[i];
      if (s >= p.s_t && (s < p.s_end || (i + 1 == pieces.size() && s <= p.s_end))) return p.eval(s);
    }
    throw Error(ErrorCode::out_of_domain, "s outside the curve domain");
  }
};

struct FitParams {
  double piece_length = 30.0;     ///< S_max
  double sigma_m = 0.05;          ///< measurement std, meters
  double prior_variance = 1e4;
  double anchor_sigma = 0.005;
  double degeneracy_ratio = 1e-6;  ///< |R_rr| / |R_00| in scaled time below which order r is dropped

  void validate() const {
    if (!(piece_length > 0.0) || !(sigma_m > 0.0) || !(prior_variance > 0.0) || !(anchor_sigma > 0.0)) {
      throw Error(ErrorCode::config_error, "curve fit parameters must be positive");
    }
  }
};

struct FitDiagnostics {
  std::vector<int> order;  ///< polynomial order used per piece (3 unless degenerate)
};

/// Square-root information form of recursive least squares over coefficient
/// vectors for X and Y that share one observation row. Static state, no
/// process noise: the result equals the batch regularized solution.
class SquareRootEstimator {
 public:
  SquareRootEstimator(int size, std::span<const double> prior_std) : n_(size) {
    for (int i = 0; i < n_; ++i) r_[i][i] = 1.0 / prior_std[static_cast<std::size_t>(i)];
  }

  /// Folds in one observation h . c = (bx, by) with standard deviation sigma.
  void update(std::span<const double> h, double bx, double by, double sigma) {
    std::array<double, 4> row{};
    for (int i = 0; i < n_; ++i) row[i] = h[static_cast<std::size_t>(i)] / sigma;
    double zx = bx / sigma, zy = by / sigma;
    for (int i = 0; i < n_; ++i) {
      if (row[i] == 0.0) continue;
      const double rad = std::hypot(r_[i][i], row[i]);
      const double c = r_[i][i] / rad, s = row[i] / rad;
      for (int j = i; j < n_; ++j) {
        const double a = r_[i][j], b = row[j];
        r_[i][j] = c * a + s * b;
        row[j] = -s * a + c * b;
      }
      const double ax = zx_[i], ay = zy_[i];
      zx_[i] = c * ax + s * zx;
      zx = -s * ax + c * zx;
      zy_[i] = c * ay + s * zy;
      zy = -s * ay + c * zy;
    }
  }

  double diagonal(int i) const { return r_[i][i]; }

  std::pair<std::array<double, 4>, std::array<double, 4>> solve() const {
    std::array<double, 4> x{}, y{};
    for (int i = n_ - 1; i >= 0; --i) {
      double sx = zx_[i], sy = zy_[i];
      for (int j = i + 1; j < n_; ++j) {
        sx -= r_[i][j] * x[j];
        sy -= r_[i][j] * y[j];
      }
      x[i] = sx / r_[i][i];
      y[i] = sy / r_[i][i];
    }
    return {x, y};
  }

 private:
  int n_;
  std::array<std::array<double, 4>, 4> r_{};
  std::array<double, 4> zx_{}, zy_{};
};

namespace detail {

/// One piece in scaled time u = (s - s_t) / L, returned in meters. The
/// state is taken relative to a reference point (the anchor, else the first
/// sample) so the zero-mean prior does not pull on the absolute position.
inline CurvePiece fit_piece(std::span<const Point2> pts, std::span<const double> s, double s_t, double s_end,
                            std::optional<Point2> anchor, const FitParams& params, int& order_used) {
  const double L = std::max(s_end - s_t, 1e-9);
  const Point2 ref = anchor ? *anchor : pts[0];
  for (int order = 3; order >= 0; --order) {
    const int size = order + 1;
    std::array<double, 4> prior_std{};
    for (int r = 0; r < size; ++r) prior_std[r] = std::sqrt(params.prior_variance) * std::pow(L, r);
    SquareRootEstimator est(size, prior_std);
    std::array<double, 4> h{};
    if (anchor) {
      h = {1.0, 0.0, 0.0, 0.0};
      est.update(h, anchor->x - ref.x, anchor->y - ref.y, params.anchor_sigma);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double u = (s[i] - s_t) / L;
      h = {1.0, u, u * u, u * u * u};
      est.update(h, pts[i].x - ref.x, pts[i].y - ref.y, params.sigma_m);
    }
    const bool degenerate = order > 0 && std::abs(est.diagonal(order)) < params.degeneracy_ratio * std::abs(est.diagonal(0));
    if (degenerate) continue;
    const auto [cx, cy] = est.solve();
    CurvePiece piece;
    piece.s_t = s_t;
    piece.s_end = s_end;
    for (int r = 0; r < size; ++r) {
      piece.px[r] = cx[r] / std::pow(L, r);
      piece.py[r] = cy[r] / std::pow(L, r);
    }
    piece.px[0] += ref.x;
    piece.py[0] += ref.y;
    order_used = order;
    return piece;
  }
  order_used = 0;
  return CurvePiece{s_t, s_end, {pts[0].x, 0, 0, 0}, {pts[0].y, 0, 0, 0}};
}

}  // namespace detail

/// Piecewise cubic fit over ceil(total / S_max) pieces split at sample s
/// values; each piece after the first is anchored to its predecessor's end.
inline LaneCurve fit_curve(const ArcSamples& samples, const FitParams& params = {},
                           FitDiagnostics* diagnostics = nullptr) {
  params.validate();
  const std::size_t m = samples.points.size();
  if (m < 4) throw Error(ErrorCode::too_few_points, "need at least four points to fit");
  const double s0 = samples.s.front(), total = samples.s.back() - s0;
  const std::size_t pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(total / params.piece_length - 1e-9)));

  // Piece boundaries at the first sample at or past each equal split.
  std::vector<std::size_t> start{0};
  for (std::size_t t = 1; t < pieces; ++t) {
    const double target = s0 + total * static_cast<double>(t) / static_cast<double>(pieces);
    std::size_t k = static_cast<std::size_t>(std::lower_bound(samples.s.begin(), samples.s.end(), target) - samples.s.begin());
    if (k > start.back() && k < m) start.push_back(k);
  }
  start.push_back(m);

  LaneCurve curve;
  std::optional<Point2> anchor;
  for (std::size_t t = 0; t + 1 < start.size(); ++t) {
    const std::size_t a = start[t], b = start[t + 1];
    const double s_t = samples.s[a];
    const double s_e = b < m ? samples.s[b] : samples.s.back();
    int order = 3;
    CurvePiece piece = detail::fit_piece(std::span(samples.points).subspan(a, b - a),
                                         std::span(samples.s).subspan(a, b - a), s_t, s_e, anchor, params, order);
    if (diagnostics) diagnostics->order.push_back(order);
    anchor = piece.eval(s_e);
    curve.pieces.push_back(piece);
  }
  return curve;
}

struct LaneLine {
  int id = 0;
  MarkType type = MarkType::dashed;
  std::vector<int> members;
  LaneCurve curve;                ///< empty when too few points
  std::vector<Point2> raw_points; ///< kept when the curve could not be fitted
};

struct LaneMap {
  std::vector<LaneLine> lines;

  const LaneLine& line(int id) const {
    for (const LaneLine& l : lines) {
      if (l.id == id) return l;
    }
    throw Error(ErrorCode::invalid_input, "unknown lane line id " + std::to_string(id));
  }
};

inline LaneMap assemble_map(std::span<const LaneLineObject> objects, const FitParams& params = {}) {
  LaneMap map;
  for (const LaneLineObject& o : objects) {
    LaneLine line;
    line.id = o.id;
    line.type = o.type;
    line.members = o.members;
    try {
      line.curve = fit_curve(parameterize_arclength(o.points), params);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::too_few_points) throw;
      line.raw_points = o.points;
    }
    map.lines.push_back(std::move(line));
  }
  return map;
}

}  // namespace lanemap
