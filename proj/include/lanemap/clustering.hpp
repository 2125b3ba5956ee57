#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lanemap/accumulate.hpp"
#include "lanemap/error.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/polygon.hpp"

namespace lanemap {

struct MarkCluster {
  int id = 0;
  std::vector<std::size_t> cells;  ///< raster indices, ascending
  std::vector<Point2> centers;     ///< world centers of `cells`
  std::uint64_t point_count = 0;
  Mbr mbr;  ///< of the cells' footprint (corners, not centers)
};

struct PreclusterParams {
  int k = 3;  ///< search window, cells
  std::size_t min_cells = 4;

  void validate() const {
    if (k < 3 || k % 2 == 0) throw Error(ErrorCode::config_error, "pre-cluster window k must be odd and at least 3");
  }
};

struct ReclusterParams {
  double radius = 1.5;  ///< circle radius R, meters
  double kappa = 0.5;   ///< merge coefficient
  double vote_fraction = 0.5;
  double sigma_min = 0.1;
  double epsilon = 1e-6;  ///< |dl| below this counts as purely lateral
  /// In re_cluster the lateral guard is at least this many raster cells, so
  /// sub-cell along-track offsets between cell centers are not read as slopes.
  double quantization_guard = 1.0;

  void validate() const {
    if (!(radius > 0.0)) throw Error(ErrorCode::config_error, "re-cluster radius must be positive");
    if (!(kappa > 0.0)) throw Error(ErrorCode::config_error, "kappa must be positive");
    if (!(sigma_min > 0.0)) throw Error(ErrorCode::config_error, "sigma_min must be positive");
    if (!(quantization_guard >= 0.0)) throw Error(ErrorCode::config_error, "quantization_guard must be non-negative");
  }
};

namespace detail {

inline Mbr footprint_mbr(const RasterGrid& grid, std::span<const std::size_t> cells) {
  std::vector<Point2> corners;
  corners.reserve(cells.size() * 4);
  const double h = 0.5 * grid.resolution;
  for (std::size_t i : cells) {
    const Point2 c = grid.center(grid.cell_at(i));
    corners.push_back({c.x - h, c.y - h});
    corners.push_back({c.x + h, c.y - h});
    corners.push_back({c.x + h, c.y + h});
    corners.push_back({c.x - h, c.y + h});
  }
  return minimum_bounding_rectangle(corners);
}

inline MarkCluster make_cluster(int id, std::vector<std::size_t> cells, const RasterImage& img) {
  std::sort(cells.begin(), cells.end());
  MarkCluster c;
  c.id = id;
  c.centers.reserve(cells.size());
  for (std::size_t i : cells) {
    c.centers.push_back(img.grid.center(img.grid.cell_at(i)));
    c.point_count += img.hits[i];
  }
  c.mbr = footprint_mbr(img.grid, cells);
  c.cells = std::move(cells);
  return c;
}

}  // namespace detail

/// Connected components of occupied cells, where two cells are adjacent when
/// one lies in the other's k x k window.
inline std::vector<MarkCluster> pre_cluster_bfs(const RasterImage& img, const PreclusterParams& params = {}) {
  params.validate();
  const int reach = params.k / 2;
  const RasterGrid& g = img.grid;
  std::vector<char> seen(g.size(), 0);
  std::vector<MarkCluster> out;
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < g.size(); ++start) {
    if (seen[start] || !img.occupied(start)) continue;
    queue.assign(1, start);
    seen[start] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Cell c = g.cell_at(queue[head]);
      for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
          const Cell n{c.col + dc, c.row + dr};
          if (!g.in_bounds(n)) continue;
          const std::size_t j = g.index(n);
          if (seen[j] || !img.occupied(j)) continue;
          seen[j] = 1;
          queue.push_back(j);
        }
      }
    }
    if (queue.size() < params.min_cells) continue;
    out.push_back(detail::make_cluster(static_cast<int>(out.size()), queue, img));
  }
  return out;
}

/// |dt / dl| of a - b in the local road axes; +inf when |dl| < epsilon.
inline double deviation_ratio(Point2 a, Point2 b, const DrivingFrame& frame, double epsilon = 1e-6) {
  const Point2 d = a - b;
  const double dl = dot(d, frame.driving.vec());
  const double dt = dot(d, frame.transverse.vec());
  if (std::abs(dl) < epsilon) return std::numeric_limits<double>::infinity();
  return std::abs(dt / dl);
}

/// Gaussian kernel exp(-p^2 / 2 sigma^2) / (sqrt(2 pi) sigma); zero at p = inf.
inline double gaussian_kernel(double p, double sigma) {
  if (std::isinf(p)) return 0.0;
  return std::exp(-p * p / (2.0 * sigma * sigma)) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

/// Bucketed index over a point set for fixed-radius queries.
class PointIndex {
 public:
  PointIndex(std::span<const Point2> points, double radius) : points_(points), radius_(radius) {
    for (std::size_t i = 0; i < points.size(); ++i) buckets_[key(bucket(points[i]))].push_back(i);
  }

  /// Indices within `r` (<= the build radius) of q, ascending.
  std::vector<std::size_t> within(Point2 q, double r) const {
    std::vector<std::size_t> out;
    visit(q, [&](std::size_t i) {
      if (distance(points_[i], q) <= r) out.push_back(i);
    });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Nearest point within the build radius; ties go to the smaller index.
  std::optional<std::size_t> nearest(Point2 q) const {
    std::optional<std::size_t> best;
    double best_d = radius_;
    visit(q, [&](std::size_t i) {
      const double d = distance(points_[i], q);
      if (d < best_d || (d == best_d && (!best || i < *best))) {
        best_d = d;
        best = i;
      }
    });
    return best;
  }

  std::span<const Point2> points() const { return points_; }

 private:
  std::pair<std::int64_t, std::int64_t> bucket(Point2 p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / radius_)), static_cast<std::int64_t>(std::floor(p.y / radius_))};
  }
  static std::int64_t key(std::pair<std::int64_t, std::int64_t> b) { return b.first * 0x1000003 + b.second; }

  template <class F>
  void visit(Point2 q, F&& f) const {
    const auto [bx, by] = bucket(q);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = buckets_.find(key({bx + dx, by + dy}));
        if (it == buckets_.end()) continue;
        for (std::size_t i : it->second) f(i);
      }
    }
  }

  std::span<const Point2> points_;
  double radius_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

/// Kernel scale around target point j: root mean square deviation ratio of
/// the other target points in its circle, over w - 1; sigma_min when w < 2.
template <class FrameAt>
double kernel_sigma(const PointIndex& target, std::size_t j, FrameAt&& frame_at, const ReclusterParams& params) {
  const Point2 mj = target.points()[j];
  const DrivingFrame frame = frame_at(mj);
  double sum = 0.0;
  std::size_t w = 0;
  for (std::size_t q : target.within(mj, params.radius)) {
    if (q == j) continue;
    const double p = deviation_ratio(target.points()[q], mj, frame, params.epsilon);
    if (std::isinf(p)) continue;
    sum += p * p;
    ++w;
  }
  if (w < 2) return params.sigma_min;
  return std::max(params.sigma_min, std::sqrt(sum / static_cast<double>(w - 1)));
}

struct Membership {
  std::size_t nearest = 0;           ///< index of M*, the target point nearest n_i
  std::vector<std::size_t> members;  ///< target points in the circle of M*
  double density = 0.0;              ///< p(n_i) = (1/k) sum_j p(n_i | m_j)
  double threshold = 0.0;            ///< kappa * (1/k) sum_j 1 / (sqrt(2 pi) sigma_j)
  bool passes() const { return density > threshold; }
};

/// Membership of n_i in the target cluster; nullopt (NotAdjacent) when no
/// target point lies within R of n_i. `sigma_of(j)` supplies sigma_j.
template <class FrameAt, class SigmaOf>
std::optional<Membership> membership_probability(Point2 n, const PointIndex& target, FrameAt&& frame_at,
                                                 SigmaOf&& sigma_of, const ReclusterParams& params) {
  const auto star = target.nearest(n);
  if (!star) return std::nullopt;
  Membership m;
  m.nearest = *star;
  m.members = target.within(target.points()[*star], params.radius);
  const DrivingFrame frame = frame_at(target.points()[*star]);
  const double inv_root = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::size_t j : m.members) {
    const double sigma = sigma_of(j);
    m.density += gaussian_kernel(deviation_ratio(n, target.points()[j], frame, params.epsilon), sigma);
    m.threshold += inv_root / sigma;
  }
  const double k = static_cast<double>(m.members.size());
  m.density /= k;
  m.threshold *= params.kappa / k;
  return m;
}

/// Convenience form with sigma computed on the fly.
template <class FrameAt>
std::optional<Membership> membership_probability(Point2 n, const PointIndex& target, FrameAt&& frame_at,
                                                 const ReclusterParams& params) {
  return membership_probability(
      n, target, frame_at, [&](std::size_t j) { return kernel_sigma(target, j, frame_at, params); }, params);
}

struct PairVote {
  std::size_t evaluated = 0;
  std::size_t passed = 0;
  bool merges(double vote_fraction) const {
    return evaluated > 0 && static_cast<double>(passed) / static_cast<double>(evaluated) > vote_fraction;
  }
};

namespace detail {

struct ReclusterState {
  const MarkCluster* cluster;
  PointIndex index;
  std::vector<double> sigma;  ///< NaN until computed
  std::vector<Point2> boundary;
  Box2 box;
};

inline std::vector<Point2> boundary_centers(const RasterImage& img, const MarkCluster& c,
                                            std::span<const int> label) {
  std::vector<Point2> out;
  const RasterGrid& g = img.grid;
  for (std::size_t k = 0; k < c.cells.size(); ++k) {
    const Cell cell = g.cell_at(c.cells[k]);
    bool edge = false;
    for (int dr = -1; dr <= 1 && !edge; ++dr) {
      for (int dc = -1; dc <= 1 && !edge; ++dc) {
        const Cell n{cell.col + dc, cell.row + dr};
        edge = !g.in_bounds(n) || label[g.index(n)] != c.id;
      }
    }
    if (edge) out.push_back(c.centers[k]);
  }
  return out;
}

}  // namespace detail

/// Boundary points of `from` tested against `to`; NotAdjacent points are not counted.
template <class FrameAt>
PairVote vote(detail::ReclusterState& from, detail::ReclusterState& to, FrameAt&& frame_at,
              const ReclusterParams& params) {
  PairVote v;
  auto sigma_of = [&](std::size_t j) {
    if (std::isnan(to.sigma[j])) to.sigma[j] = kernel_sigma(to.index, j, frame_at, params);
    return to.sigma[j];
  };
  for (Point2 n : from.boundary) {
    if (n.x < to.box.min.x - params.radius || n.x > to.box.max.x + params.radius ||
        n.y < to.box.min.y - params.radius || n.y > to.box.max.y + params.radius) {
      continue;
    }
    const auto m = membership_probability(n, to.index, frame_at, sigma_of, params);
    if (!m) continue;
    ++v.evaluated;
    v.passed += m->passes();
  }
  return v;
}

/// Merges over-segmented clusters. A pair whose MBR gap is below R merges
/// when each side's boundary vote passes against the other. Rounds repeat on
/// the merged partition until nothing changes; a merged cluster keeps the
/// smallest id.
inline std::vector<MarkCluster> re_cluster(std::vector<MarkCluster> clusters, const RasterImage& img,
                                           const TrajectoryField& field, const ReclusterParams& p = {}) {
  p.validate();
  ReclusterParams params = p;
  params.epsilon = std::max(p.epsilon, p.quantization_guard * img.grid.resolution);
  auto frame_at = [&](Point2 p) { return field.at(p); };
  std::vector<int> label(img.grid.size(), -1);
  for (;;) {
    std::sort(clusters.begin(), clusters.end(), [](const MarkCluster& a, const MarkCluster& b) { return a.id < b.id; });
    for (const MarkCluster& c : clusters) {
      for (std::size_t i : c.cells) label[i] = c.id;
    }
    std::vector<detail::ReclusterState> state;
    state.reserve(clusters.size());
    for (const MarkCluster& c : clusters) {
      detail::ReclusterState s{&c, PointIndex(c.centers, params.radius),
                               std::vector<double>(c.centers.size(), std::numeric_limits<double>::quiet_NaN()),
                               detail::boundary_centers(img, c, label), bounding_box(c.centers)};
      state.push_back(std::move(s));
    }

    std::vector<std::size_t> parent(clusters.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    bool merged = false;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        if (!(rectangle_gap(clusters[a].mbr, clusters[b].mbr) < params.radius)) continue;
        if (!vote(state[a], state[b], frame_at, params).merges(params.vote_fraction)) continue;
        if (!vote(state[b], state[a], frame_at, params).merges(params.vote_fraction)) continue;
        const std::size_t ra = find(a), rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
        merged = true;
      }
    }
    if (!merged) return clusters;

    std::vector<MarkCluster> next;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      if (find(a) != a) continue;
      std::vector<std::size_t> cells;
      for (std::size_t b = a; b < clusters.size(); ++b) {
        if (find(b) == a) cells.insert(cells.end(), clusters[b].cells.begin(), clusters[b].cells.end());
      }
      next.push_back(detail::make_cluster(clusters[a].id, std::move(cells), img));
    }
    clusters = std::move(next);
  }
}

}  // namespace lanemap
