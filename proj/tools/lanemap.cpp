#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lanemap.hpp"

namespace fs = std::filesystem;
using namespace lanemap;

namespace {

enum Exit { ok = 0, config_failure = 2, parse_failure = 3, stage_failed = 4 };

struct Options {
  std::string config;
  std::string out;
  bool debug_rasters = false;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool dump_config = false;
  std::string frames, poses, truth;
  std::string format = "csv";
  int threshold = 100;
  std::string stage;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

PipelineConfig make_config(const Options& o) {
  std::vector<std::string> overrides = o.sets;
  auto quoted = [](const std::string& s) { return Json(s).dump(); };
  if (!o.out.empty()) overrides.push_back("paths.out=" + quoted(o.out));
  if (!o.frames.empty()) overrides.push_back("paths.frames=" + quoted(o.frames));
  if (!o.poses.empty()) overrides.push_back("paths.poses=" + quoted(o.poses));
  if (!o.truth.empty()) overrides.push_back("paths.truth=" + quoted(o.truth));
  if (o.threads) overrides.push_back("threads=" + std::to_string(*o.threads));
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  if (o.debug_rasters) overrides.push_back("debug_rasters=true");
  return load_config(o.config, overrides);
}

void require_path(const std::string& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::config_error, std::string("no ") + what + " path given");
}

fs::path out_dir(const PipelineConfig& c) {
  fs::path d = c.paths.out;
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + path.string());
  out << text;
}

// Map rows are written top-down with world +y up.
void write_pgm(const fs::path& path, const RasterImage& img) {
  const RasterGrid& g = img.grid;
  std::string data = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  for (int row = g.height - 1; row >= 0; --row) {
    for (int col = 0; col < g.width; ++col) {
      const std::size_t i = g.index({col, row});
      const double v = img.occupied(i) ? std::min(255.0, std::max(1.0, img.mean_intensity(i))) : 0.0;
      data.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  write_text(path, data);
}

void write_label_ppm(const fs::path& path, const RasterImage& img, std::span<const ClassifiedCluster> classified) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + path.string());
  write_ppm(out, img, classified);
}

void print_metrics(const EvaluationReport& r) {
  std::printf("%-8s %6s %6s %6s\n", "class", "TP", "FP", "FN");
  for (MarkType t : kMarkTypes) {
    const ClassCounts& c = r.matching.counts[t];
    std::printf("%-8s %6llu %6llu %6llu\n", to_string(t), static_cast<unsigned long long>(c.tp),
                static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.fn));
  }
  const ClassCounts t = r.matching.counts.total();
  std::printf("%-8s %6llu %6llu %6llu\n", "total", static_cast<unsigned long long>(t.tp),
              static_cast<unsigned long long>(t.fp), static_cast<unsigned long long>(t.fn));
  std::printf("precision %.3f  recall %.3f  F %.3f  F1 %.3f\n", r.indicators.precision, r.indicators.recall,
              r.indicators.fscore, r.standard.fscore);
  if (!r.lanes.empty()) {
    std::printf("%-6s %-8s %8s %10s\n", "line", "type", "boundary", "rmse_cm");
    for (const LaneAccuracy& a : r.lanes) {
      std::printf("%-6d %-8s %8d %10.3f\n", a.line_id, to_string(a.type), a.boundary, a.rmse_cm);
    }
  }
}

void report(const fs::path& dir, const EvaluationReport& r) {
  save_json((dir / "metrics.json").string(), metrics_json(r));
  print_metrics(r);
}

void dump_config(const PipelineConfig& cfg) { std::cout << to_json(cfg).dump(2) << '\n'; }

int cmd_synth(const PipelineConfig& cfg, const Options& o) {
  const SceneSpec spec = cfg.effective_scene();
  cfg.validate_scene();
  Timer timer;
  const GroundTruth truth = build_scene(spec);
  const std::vector<Pose> traj = make_trajectory(spec, cfg.sensor);
  const fs::path dir = out_dir(cfg);
  const bool binary = o.format == "binary";
  const fs::path frames_path = dir / (binary ? "frames.lmf" : "frames.csv");
  std::ofstream out(frames_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + frames_path.string());
  FrameWriter writer(out, binary ? FrameFormat::binary : FrameFormat::csv);
  const SweepSimulator sim(truth, spec, cfg.sensor);
  std::vector<PoseRecord> poses;
  const std::size_t batch = 4 * static_cast<std::size_t>(cfg.threads);
  for (std::size_t b = 0; b < traj.size(); b += batch) {
    const std::size_t n = std::min(batch, traj.size() - b);
    std::vector<LidarFrame> frames(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) { frames[i] = sim.simulate(traj[b + i], b + i).frame; });
    for (std::size_t i = 0; i < n; ++i) {
      writer.write(frames[i]);
      poses.push_back({b + i, traj[b + i]});
    }
  }
  save_poses((dir / "poses.csv").string(), poses);
  save_json((dir / "truth.json").string(), truth_json(truth));
  spdlog::info("synth: {} frames, {} marks in {:.2f} s", traj.size(), truth.marks.size(), timer.seconds());
  std::cout << "frames " << frames_path.string() << "\nposes " << (dir / "poses.csv").string() << "\ntruth "
            << (dir / "truth.json").string() << '\n';
  return ok;
}

enum class Stage { extract, raster, cluster, recognize, lane_model };

Stage parse_stage(const std::string& s) {
  if (s == "extract") return Stage::extract;
  if (s == "raster") return Stage::raster;
  if (s == "cluster") return Stage::cluster;
  if (s == "recognize") return Stage::recognize;
  if (s == "lane_model") return Stage::lane_model;
  throw Error(ErrorCode::config_error, "unknown stage '" + s + "'");
}

CloudBuild accumulate_markings(const PipelineConfig& cfg, const PipelineParams& params,
                               std::span<const PoseRecord> poses) {
  require_path(cfg.paths.frames, "frames");
  FrameReader reader = FrameReader::open(cfg.paths.frames);
  Timer timer;
  CloudBuild cb = run_stage("extract", [&] { return build_marking_cloud([&] { return reader.next(); }, poses, params); });
  spdlog::info("extract: {} frames ({} without pose), {} marking points in {:.2f} s", cb.frames, cb.dropped_frames,
               cb.cloud.size(), timer.seconds());
  return cb;
}

std::vector<PoseRecord> load_pose_file(const PipelineConfig& cfg) {
  require_path(cfg.paths.poses, "poses");
  return load_poses(cfg.paths.poses);
}

// Artifact writers shared by `run` and `stage`.

void save_cloud(const fs::path& dir, std::span<const CloudPoint> cloud) {
  std::ofstream out(dir / "markings.csv", std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + (dir / "markings.csv").string());
  write_cloud(out, cloud);
}

void save_raster(const fs::path& dir, const PipelineConfig& cfg, const RasterImage& img) {
  spdlog::info("raster: {}x{} cells", img.grid.width, img.grid.height);
  save_json((dir / "raster.json").string(), raster_json(img));
  if (cfg.debug_rasters) write_pgm(dir / "raster.pgm", img);
}

void save_clusters(const fs::path& dir, const PipelineConfig& cfg, const RasterImage& img,
                   std::span<const MarkCluster> pre, std::span<const MarkCluster> clusters) {
  spdlog::info("cluster: {} pre-clusters, {} clusters", pre.size(), clusters.size());
  save_json((dir / "clusters.json").string(), clusters_json(clusters));
  if (cfg.debug_rasters) {
    // cluster images reuse the label palette with every cluster drawn as "other"
    auto as_other = [](std::span<const MarkCluster> cs) {
      std::vector<ClassifiedCluster> out;
      for (const MarkCluster& c : cs) out.push_back({c, MarkType::other, {}});
      return out;
    };
    if (!pre.empty()) write_label_ppm(dir / "preclusters.ppm", img, as_other(pre));
    write_label_ppm(dir / "clusters.ppm", img, as_other(clusters));
  }
}

void save_classified(const fs::path& dir, const PipelineConfig& cfg, const RasterImage& img,
                     std::span<const ClassifiedCluster> classified) {
  save_json((dir / "classified.json").string(), classified_json(classified));
  if (cfg.debug_rasters) write_label_ppm(dir / "labels.ppm", img, classified);
}

void save_map(const fs::path& dir, const PipelineConfig& cfg, const LaneMap& map) {
  spdlog::info("lane model: {} lane lines", map.lines.size());
  LaneMapDocument doc;
  doc.map = map;
  doc.config_hash = config_hash(cfg);
  if (!cfg.paths.frames.empty()) doc.inputs.push_back({"frames", file_hash(cfg.paths.frames)});
  doc.inputs.push_back({"poses", file_hash(cfg.paths.poses)});
  write_text(dir / "map.json", write_map(doc));
}

RasterImage load_raster(const fs::path& dir) { return raster_from_json(load_json((dir / "raster.json").string())); }

std::vector<CloudPoint> load_cloud(const fs::path& dir) {
  std::ifstream in(dir / "markings.csv", std::ios::binary);
  if (!in) throw ParseError("cannot open " + (dir / "markings.csv").string());
  return read_cloud(in);
}

int cmd_run(const PipelineConfig& cfg) {
  const PipelineParams params = cfg.effective();
  const std::vector<PoseRecord> poses = load_pose_file(cfg);
  std::optional<GroundTruth> truth;
  if (!cfg.paths.truth.empty()) truth = load_truth(cfg.paths.truth);
  const fs::path dir = out_dir(cfg);

  const CloudBuild cb = accumulate_markings(cfg, params, poses);
  save_cloud(dir, cb.cloud);
  const MapBuild mb = build_map(cb.cloud, poses, params);
  save_raster(dir, cfg, mb.raster);
  save_clusters(dir, cfg, mb.raster, mb.preclusters, mb.clusters);
  save_classified(dir, cfg, mb.raster, mb.classified);
  save_map(dir, cfg, mb.map);
  if (truth) report(dir, evaluate(mb, *truth, params, cfg.rmse_step));
  return ok;
}

// One stage, reading the previous stage's artifact from the output directory.
int cmd_stage(const PipelineConfig& cfg, Stage stage) {
  const PipelineParams params = cfg.effective();
  const std::vector<PoseRecord> poses = load_pose_file(cfg);
  const fs::path dir = out_dir(cfg);
  switch (stage) {
    case Stage::extract:
      save_cloud(dir, accumulate_markings(cfg, params, poses).cloud);
      return ok;
    case Stage::raster:
      save_raster(dir, cfg, raster_stage(load_cloud(dir), params));
      return ok;
    default:
      break;
  }
  const RasterImage img = load_raster(dir);
  const TrajectoryField field = run_stage("trajectory", [&] { return TrajectoryField(poses); });
  if (stage == Stage::cluster) {
    std::vector<MarkCluster> pre;
    const std::vector<MarkCluster> clusters = cluster_stage(img, field, params, &pre);
    save_clusters(dir, cfg, img, pre, clusters);
    return ok;
  }
  if (stage == Stage::recognize) {
    const std::vector<MarkCluster> clusters = clusters_from_json(load_json((dir / "clusters.json").string()), img);
    save_classified(dir, cfg, img, recognition_stage(clusters, img, field, params));
    return ok;
  }
  const std::vector<ClassifiedCluster> classified =
      classified_from_json(load_json((dir / "classified.json").string()), img);
  save_map(dir, cfg, lane_model_stage(classified, field, params).second);
  return ok;
}

int cmd_eval(const PipelineConfig& cfg) {
  require_path(cfg.paths.truth, "truth");
  const fs::path dir = cfg.paths.out;
  const GroundTruth truth = load_truth(cfg.paths.truth);
  MapBuild mb;
  mb.raster = load_raster(dir);
  mb.classified = classified_from_json(load_json((dir / "classified.json").string()), mb.raster);
  mb.map = load_map((dir / "map.json").string()).map;
  report(dir, evaluate(mb, truth, cfg.effective(), cfg.rmse_step));
  return ok;
}

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::config_error:
    case ErrorCode::spec_error: return config_failure;
    case ErrorCode::parse_error:
    case ErrorCode::format_error:
    case ErrorCode::version_error: return parse_failure;
    default: return stage_failed;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("lanemap");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("LANEMAP_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Lane-level map construction from lidar road-marking sweeps"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--set", o.sets, "override KEY=VALUE (dotted key, JSON value)");
    sub->add_flag("--debug-rasters", o.debug_rasters, "write PGM/PPM raster images");
    sub->add_flag("--dump-config", o.dump_config, "print the effective configuration and exit");
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--frames", o.frames, "frames file (CSV or LMF1)");
    sub->add_option("--poses", o.poses, "poses CSV");
    sub->add_option("--truth", o.truth, "ground-truth JSON");
  };
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene and its sweeps");
  common(synth);
  synth->add_option("--format", o.format, "frames format")->check(CLI::IsMember({"csv", "binary"}));
  CLI::App* run = app.add_subcommand("run", "build the lane map");
  common(run);
  inputs(run);
  CLI::App* stage = app.add_subcommand("stage", "run the pipeline through one stage");
  common(stage);
  inputs(stage);
  stage->add_option("name", o.stage, "extract | raster | cluster | recognize | lane_model")
      ->required()
      ->check(CLI::IsMember({"extract", "raster", "cluster", "recognize", "lane_model"}));
  CLI::App* eval = app.add_subcommand("eval", "score a finished run against ground truth");
  common(eval);
  eval->add_option("--truth", o.truth, "ground-truth JSON");
  CLI::App* baseline = app.add_subcommand("baseline-fixed-threshold", "run with one fixed intensity threshold");
  common(baseline);
  inputs(baseline);
  baseline->add_option("--threshold", o.threshold, "intensity threshold")->check(CLI::Range(0, 255));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_failure;
  }

  try {
    if (baseline->parsed()) o.sets.push_back("extraction.fixed_threshold=" + std::to_string(o.threshold));
    const PipelineConfig cfg = make_config(o);
    if (o.dump_config) {
      dump_config(cfg);
      return ok;
    }
    if (synth->parsed()) return cmd_synth(cfg, o);
    if (stage->parsed()) return cmd_stage(cfg, parse_stage(o.stage));
    if (eval->parsed()) return cmd_eval(cfg);
    return cmd_run(cfg);
  } catch (const StageError& e) {
    std::cerr << e.what() << '\n';
    return exit_code(e.cause()) == parse_failure ? parse_failure : stage_failed;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return stage_failed;
  }
}
