#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lanemap/accumulate.hpp"
#include "lanemap/clustering.hpp"
#include "lanemap/error.hpp"
#include "lanemap/evaluation.hpp"
#include "lanemap/extraction.hpp"
#include "lanemap/lane_model.hpp"
#include "lanemap/parallel.hpp"
#include "lanemap/preprocess.hpp"
#include "lanemap/recognition.hpp"

namespace lanemap {

struct RasterParams {
  double resolution = 0.1;
  int min_hits = 2;
};

struct PipelineParams {
  PreprocessParams preprocess;
  std::pair<int, int> ring_window{0, 63};
  ExtractionParams extraction;
  double pose_tolerance = 0.1;
  RasterParams raster;
  PreclusterParams precluster;
  ReclusterParams recluster;
  RecognitionParams recognition;
  ChainParams chain;
  FitParams fit;
  MatchParams match;
  int threads = 1;
};

/// Thrown by run stages; carries the failing stage's name.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(ErrorCode::stage_failure, stage + ": " + cause.what()), stage_(std::move(stage)), cause_(cause.code()) {}
  const std::string& stage() const { return stage_; }
  ErrorCode cause() const { return cause_; }

 private:
  std::string stage_;
  ErrorCode cause_;
};

template <class F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

/// Marking points of one frame in world coordinates (empty when no pose matches).
struct FrameMarkings {
  std::uint64_t frame_id = 0;
  bool matched = false;
  std::size_t road_points = 0;
  std::vector<CloudPoint> points;
  std::vector<SectorThreshold> sectors;
};

/// Preprocess and extract one sensor-frame sweep, then move its markings to world.
inline FrameMarkings process_frame(const LidarFrame& frame, std::span<const PoseRecord> poses_by_time,
                                   const PipelineParams& params) {
  FrameMarkings out;
  out.frame_id = frame.frame_id;
  const auto k = match_pose(poses_by_time, frame.timestamp, params.pose_tolerance);
  if (!k) return out;
  out.matched = true;
  const BoundaryFit fit = filter_boundary(detect_curb_candidates(frame, params.preprocess), frame, params.preprocess);
  GroundLabeling labels = segment_ground(frame, params.preprocess);
  mark_boundary(labels, fit.survivors);
  const std::vector<std::size_t> road = clip_to_road(frame, fit.boundary, labels, params.ring_window);
  out.road_points = road.size();
  FrameExtraction ex = extract_frame(frame, road, params.extraction);
  out.sectors = std::move(ex.sectors);
  LidarFrame marks;
  marks.frame_id = frame.frame_id;
  marks.timestamp = frame.timestamp;
  marks.points.reserve(ex.markings.size());
  for (std::size_t i : ex.markings) marks.points.push_back(frame.points[i]);
  out.points = transform_frame(marks, poses_by_time[*k].pose);
  return out;
}

inline std::vector<PoseRecord> sorted_by_time(std::span<const PoseRecord> poses) {
  std::vector<PoseRecord> out(poses.begin(), poses.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const PoseRecord& a, const PoseRecord& b) { return a.pose.timestamp < b.pose.timestamp; });
  return out;
}

struct CloudBuild {
  std::vector<CloudPoint> cloud;
  std::size_t frames = 0;
  std::size_t dropped_frames = 0;
};

/// Pulls frames from `next` in batches, processes each batch in parallel,
/// and appends markings in input order.
inline CloudBuild build_marking_cloud(const std::function<std::optional<LidarFrame>()>& next,
                                      std::span<const PoseRecord> poses, const PipelineParams& params) {
  const std::vector<PoseRecord> by_time = sorted_by_time(poses);
  CloudBuild out;
  const std::size_t batch = 4 * static_cast<std::size_t>(std::max(params.threads, 1));
  for (;;) {
    std::vector<LidarFrame> frames;
    while (frames.size() < batch) {
      std::optional<LidarFrame> f = next();
      if (!f) break;
      frames.push_back(std::move(*f));
    }
    if (frames.empty()) break;
    std::vector<FrameMarkings> results(frames.size());
    parallel_for(frames.size(), params.threads,
                 [&](std::size_t i) { results[i] = process_frame(frames[i], by_time, params); });
    for (FrameMarkings& r : results) {
      ++out.frames;
      if (!r.matched) {
        ++out.dropped_frames;
        continue;
      }
      out.cloud.insert(out.cloud.end(), r.points.begin(), r.points.end());
    }
  }
  return out;
}

inline CloudBuild build_marking_cloud(std::span<const LidarFrame> frames, std::span<const PoseRecord> poses,
                                      const PipelineParams& params) {
  std::size_t i = 0;
  return build_marking_cloud(
      [&]() -> std::optional<LidarFrame> {
        if (i == frames.size()) return std::nullopt;
        return frames[i++];
      },
      poses, params);
}

struct MapBuild {
  RasterImage raster;
  std::vector<MarkCluster> preclusters;
  std::vector<MarkCluster> clusters;
  std::vector<ClassifiedCluster> classified;
  std::vector<LaneLineObject> objects;
  LaneMap map;
};

inline RasterImage raster_stage(std::span<const CloudPoint> cloud, const PipelineParams& params) {
  return run_stage("raster", [&] { return rasterize(cloud, params.raster.resolution, params.raster.min_hits); });
}

inline std::vector<MarkCluster> cluster_stage(const RasterImage& img, const TrajectoryField& field,
                                              const PipelineParams& params, std::vector<MarkCluster>* pre = nullptr) {
  return run_stage("cluster", [&] {
    std::vector<MarkCluster> p = pre_cluster_bfs(img, params.precluster);
    if (pre) *pre = p;
    return re_cluster(std::move(p), img, field, params.recluster);
  });
}

inline std::vector<ClassifiedCluster> recognition_stage(std::span<const MarkCluster> clusters, const RasterImage& img,
                                                        const TrajectoryField& field, const PipelineParams& params) {
  return run_stage("recognize", [&] { return classify_clusters(clusters, img, field, params.recognition); });
}

inline std::pair<std::vector<LaneLineObject>, LaneMap> lane_model_stage(std::span<const ClassifiedCluster> classified,
                                                                        const TrajectoryField& field,
                                                                        const PipelineParams& params) {
  return run_stage("lane_model", [&] {
    std::vector<LaneLineObject> objs = chain_dashes(classified, field, params.chain);
    LaneMap map = assemble_map(objs, params.fit);
    return std::pair{std::move(objs), std::move(map)};
  });
}

/// Raster through lane map from an accumulated marking cloud.
inline MapBuild build_map(std::span<const CloudPoint> cloud, std::span<const PoseRecord> poses,
                          const PipelineParams& params) {
  MapBuild out;
  const TrajectoryField field(poses);
  out.raster = raster_stage(cloud, params);
  out.clusters = cluster_stage(out.raster, field, params, &out.preclusters);
  out.classified = recognition_stage(out.clusters, out.raster, field, params);
  auto [objs, map] = lane_model_stage(out.classified, field, params);
  out.objects = std::move(objs);
  out.map = std::move(map);
  return out;
}

struct EvaluationReport {
  MatchResult matching;
  Indicators indicators;
  Indicators standard;
  std::vector<LaneAccuracy> lanes;
  std::size_t truth_objects = 0;
};

inline EvaluationReport evaluate(const MapBuild& build, const GroundTruth& truth, const PipelineParams& params,
                                 double rmse_step = 0.5) {
  return run_stage("evaluate", [&] {
    EvaluationReport r;
    const std::vector<TruthObject> objs = rasterize_truth(truth, build.raster.grid);
    r.truth_objects = objs.size();
    r.matching = match_objects(build.classified, objs, params.match);
    r.indicators = compute_indicators(r.matching.counts);
    r.standard = compute_indicators(r.matching.counts, FscoreFormula::standard_f1);
    r.lanes = evaluate_lanes(build.map, truth, rmse_step);
    return r;
  });
}

}  // namespace lanemap
