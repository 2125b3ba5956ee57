#pragma once

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lanemap/error.hpp"
#include "lanemap/pipeline.hpp"
#include "lanemap/scene.hpp"

namespace lanemap {

struct PathConfig {
  std::string frames;
  std::string poses;
  std::string truth;
  std::string out = "out";
};

/// Every tunable of the pipeline plus scene generation and file paths.
struct PipelineConfig {
  SceneSpec scene;
  SensorModel sensor;
  PipelineParams pipeline;
  double rmse_step = 0.5;
  PathConfig paths;
  int threads = 1;
  std::uint64_t seed = 1;
  bool debug_rasters = false;

  /// Pipeline parameters with the sensor-derived and global fields filled in.
  PipelineParams effective() const {
    PipelineParams p = pipeline;
    p.preprocess.elevations = sensor.elevations();
    p.preprocess.mount_height = sensor.mount_height;
    p.preprocess.azimuth_step = sensor.azimuth_step_deg * std::numbers::pi / 180.0;
    p.extraction.seed = seed;
    p.threads = threads;
    return p;
  }

  SceneSpec effective_scene() const {
    SceneSpec s = scene;
    s.seed = seed;
    return s;
  }

  void validate() const {
    try {
      const PipelineParams p = effective();
      p.preprocess.validate();
      p.extraction.validate();
      if (!(p.raster.resolution > 0.0)) throw Error(ErrorCode::config_error, "raster resolution must be positive");
      if (p.raster.min_hits < 1) throw Error(ErrorCode::config_error, "raster min_hits must be at least 1");
      if (p.ring_window.first > p.ring_window.second) throw Error(ErrorCode::config_error, "ring window is empty");
      if (!(p.pose_tolerance >= 0.0)) throw Error(ErrorCode::config_error, "pose tolerance must be non-negative");
      p.precluster.validate();
      p.recluster.validate();
      p.recognition.validate();
      p.chain.prediction.validate();
      if (!(p.chain.skeleton_step > 0.0)) throw Error(ErrorCode::config_error, "skeleton step must be positive");
      p.fit.validate();
      if (!(p.match.iou_min > 0.0 && p.match.iou_min <= 1.0)) throw Error(ErrorCode::config_error, "iou_min must lie in (0,1]");
      if (!(rmse_step > 0.0)) throw Error(ErrorCode::config_error, "rmse step must be positive");
      if (threads < 1) throw Error(ErrorCode::config_error, "threads must be at least 1");
      validate_scene();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::config_error) throw;
      throw Error(ErrorCode::config_error, e.what());
    }
  }

  void validate_scene() const {
    sensor.validate();
    lanemap::validate(scene);
  }
};

using Json = nlohmann::ordered_json;

namespace detail {

inline Json to_json(const CenterlineSegment& s) {
  return {{"kind", s.kind == CenterlineSegment::Kind::arc ? "arc" : "straight"}, {"length", s.length}, {"radius", s.radius}};
}

inline Json placements(const std::vector<LanePlacement>& v) {
  Json a = Json::array();
  for (const LanePlacement& p : v) a.push_back({{"station", p.station}, {"lane", p.lane}});
  return a;
}

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::config_error, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw Error(ErrorCode::config_error, "unknown key '" + where + "." + k + "'");
  }
}

/// Rejects keys that the defaults do not have; arrays are not descended.
inline void check_against(const Json& j, const Json& defaults, const std::string& where) {
  if (!defaults.is_object()) return;
  if (!j.is_object()) throw Error(ErrorCode::config_error, (where.empty() ? "config" : where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!defaults.contains(k)) throw Error(ErrorCode::config_error, "unknown key '" + path + "'");
    check_against(v, defaults.at(k), path);
  }
}

inline void overlay(Json& base, const Json& patch) {
  for (const auto& [k, v] : patch.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object()) {
      overlay(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

}  // namespace detail

inline Json to_json(const PipelineConfig& c) {
  const SceneSpec& s = c.scene;
  Json centerline = Json::array();
  for (const CenterlineSegment& seg : s.centerline) centerline.push_back(detail::to_json(seg));
  Json obstacles = Json::array();
  for (const ObstacleSpec& o : s.obstacles) {
    obstacles.push_back({{"station", o.station}, {"offset", o.offset}, {"yaw", o.yaw}, {"length", o.length},
                         {"width", o.width}, {"height", o.height}});
  }
  const SensorModel& m = c.sensor;
  const PipelineParams& p = c.pipeline;
  const PreprocessParams& pre = p.preprocess;
  const ExtractionParams& ex = p.extraction;
  const ShapeThresholds& sh = p.recognition.shape;
  const AngleGates& g = p.recognition.gates;
  const PredictionParams& pr = p.chain.prediction;
  Json j;
  j["scene"] = {{"centerline", centerline},
                {"origin", {s.origin.x, s.origin.y}},
                {"heading", s.heading},
                {"lane_count", s.lane_count},
                {"lane_width", s.lane_width},
                {"mark_length", s.mark_length},
                {"gap", s.gap},
                {"line_width", s.line_width},
                {"solid_left", s.solid_left},
                {"solid_right", s.solid_right},
                {"stop_lines", detail::placements(s.stop_lines)},
                {"stop_width", s.stop_width},
                {"arrows", detail::placements(s.arrows)},
                {"curb_height", s.curb_height},
                {"shoulder", s.shoulder},
                {"obstacles", obstacles},
                {"dropout", s.dropout},
                {"ego_lane", s.ego_lane},
                {"frame_spacing", s.frame_spacing},
                {"speed", s.speed}};
  j["sensor"] = {{"ring_count", m.ring_count},       {"fov_min_deg", m.fov_min_deg},
                 {"fov_max_deg", m.fov_max_deg},     {"max_range", m.max_range},
                 {"azimuth_step_deg", m.azimuth_step_deg}, {"mount_height", m.mount_height},
                 {"asphalt_mean", m.asphalt_mean},   {"asphalt_sigma", m.asphalt_sigma},
                 {"paint_mean", m.paint_mean},       {"paint_sigma", m.paint_sigma},
                 {"range_noise", m.range_noise},     {"point_dropout", m.point_dropout}};
  j["preprocess"] = {{"ring_window", {p.ring_window.first, p.ring_window.second}},
                     {"ring_gap_factor", pre.ring_gap_factor},
                     {"min_height_step", pre.min_height_step},
                     {"max_lateral", pre.max_lateral},
                     {"max_residual", pre.max_residual},
                     {"min_side_points", pre.min_side_points},
                     {"max_flat_spacing", pre.max_flat_spacing},
                     {"boundary_step", pre.boundary_step},
                     {"extrapolation", pre.extrapolation},
                     {"corridor_half_width", pre.corridor_half_width},
                     {"grid_size", pre.grid_size},
                     {"max_height_variance", pre.max_height_variance},
                     {"compression_height_span", pre.compression_height_span},
                     {"obstacle_height", pre.obstacle_height},
                     {"neighbor_cells", pre.neighbor_cells}};
  j["extraction"] = {{"radial_breaks", ex.radial_breaks},
                     {"angular_sectors", ex.angular_sectors},
                     {"rough_threshold", ex.rough_threshold},
                     {"min_count", ex.min_count},
                     {"objective", to_string(ex.objective)},
                     {"fixed_threshold", ex.fixed_threshold ? Json(*ex.fixed_threshold) : Json(nullptr)}};
  j["accumulate"] = {{"pose_tolerance", p.pose_tolerance}};
  j["raster"] = {{"resolution", p.raster.resolution}, {"min_hits", p.raster.min_hits}};
  j["clustering"] = {{"k", p.precluster.k},
                     {"min_cells", p.precluster.min_cells},
                     {"radius", p.recluster.radius},
                     {"kappa", p.recluster.kappa},
                     {"vote_fraction", p.recluster.vote_fraction},
                     {"sigma_min", p.recluster.sigma_min},
                     {"epsilon", p.recluster.epsilon},
                     {"quantization_guard", p.recluster.quantization_guard}};
  j["recognition"] = {{"dash_length_min", sh.dash_length_min},   {"dash_length_max", sh.dash_length_max},
                      {"dash_width_max", sh.dash_width_max},     {"dash_aspect_min", sh.dash_aspect_min},
                      {"solid_length_min", sh.solid_length_min}, {"solid_width_max", sh.solid_width_max},
                      {"solid_aspect_min", sh.solid_aspect_min}, {"alpha_d", g.alpha_d},
                      {"alpha_u", g.alpha_u},                    {"beta_d", g.beta_d},
                      {"beta_u", g.beta_u},                      {"window", p.recognition.window},
                      {"neighbor_radius", p.recognition.neighbor_radius}};
  j["lane_model"] = {{"d0", pr.d0},
                     {"lambda", pr.lambda},
                     {"w_theta", pr.w_theta},
                     {"h_theta", pr.h_theta},
                     {"stats_window", pr.window},
                     {"accept_threshold", pr.accept_threshold},
                     {"max_skip", pr.max_skip},
                     {"skeleton_step", p.chain.skeleton_step},
                     {"include_stop_lines", p.chain.include_stop_lines},
                     {"piece_length", p.fit.piece_length},
                     {"sigma_m", p.fit.sigma_m},
                     {"prior_variance", p.fit.prior_variance},
                     {"anchor_sigma", p.fit.anchor_sigma},
                     {"degeneracy_ratio", p.fit.degeneracy_ratio}};
  j["evaluation"] = {{"iou_min", p.match.iou_min}, {"rmse_step", c.rmse_step}};
  j["paths"] = {{"frames", c.paths.frames}, {"poses", c.paths.poses}, {"truth", c.paths.truth}, {"out", c.paths.out}};
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  j["debug_rasters"] = c.debug_rasters;
  return j;
}

/// Strict load: unknown keys and wrong types are ConfigErrors; missing keys
/// keep their defaults. The result is validated.
inline PipelineConfig config_from_json(const Json& input) {
  const Json defaults = to_json(PipelineConfig{});
  detail::check_against(input, defaults, "");
  Json j = defaults;
  detail::overlay(j, input);
  PipelineConfig c;
  try {
    const Json& s = j.at("scene");
    c.scene.centerline.clear();
    for (const Json& seg : s.at("centerline")) {
      detail::check_keys(seg, {"kind", "length", "radius"}, "scene.centerline[]");
      CenterlineSegment cs;
      const std::string kind = seg.value("kind", "straight");
      if (kind != "straight" && kind != "arc") throw Error(ErrorCode::config_error, "unknown segment kind '" + kind + "'");
      cs.kind = kind == "arc" ? CenterlineSegment::Kind::arc : CenterlineSegment::Kind::straight;
      cs.length = seg.value("length", cs.length);
      cs.radius = seg.value("radius", cs.radius);
      c.scene.centerline.push_back(cs);
    }
    c.scene.origin = {s.at("origin").at(0).get<double>(), s.at("origin").at(1).get<double>()};
    s.at("heading").get_to(c.scene.heading);
    s.at("lane_count").get_to(c.scene.lane_count);
    s.at("lane_width").get_to(c.scene.lane_width);
    s.at("mark_length").get_to(c.scene.mark_length);
    s.at("gap").get_to(c.scene.gap);
    s.at("line_width").get_to(c.scene.line_width);
    s.at("solid_left").get_to(c.scene.solid_left);
    s.at("solid_right").get_to(c.scene.solid_right);
    auto read_placements = [](const Json& a, const char* where) {
      std::vector<LanePlacement> out;
      for (const Json& e : a) {
        detail::check_keys(e, {"station", "lane"}, where);
        out.push_back({e.value("station", 0.0), e.value("lane", 0)});
      }
      return out;
    };
    c.scene.stop_lines = read_placements(s.at("stop_lines"), "scene.stop_lines[]");
    s.at("stop_width").get_to(c.scene.stop_width);
    c.scene.arrows = read_placements(s.at("arrows"), "scene.arrows[]");
    s.at("curb_height").get_to(c.scene.curb_height);
    s.at("shoulder").get_to(c.scene.shoulder);
    for (const Json& o : s.at("obstacles")) {
      detail::check_keys(o, {"station", "offset", "yaw", "length", "width", "height"}, "scene.obstacles[]");
      ObstacleSpec os;
      os.station = o.value("station", os.station);
      os.offset = o.value("offset", os.offset);
      os.yaw = o.value("yaw", os.yaw);
      os.length = o.value("length", os.length);
      os.width = o.value("width", os.width);
      os.height = o.value("height", os.height);
      c.scene.obstacles.push_back(os);
    }
    s.at("dropout").get_to(c.scene.dropout);
    s.at("ego_lane").get_to(c.scene.ego_lane);
    s.at("frame_spacing").get_to(c.scene.frame_spacing);
    s.at("speed").get_to(c.scene.speed);

    const Json& m = j.at("sensor");
    m.at("ring_count").get_to(c.sensor.ring_count);
    m.at("fov_min_deg").get_to(c.sensor.fov_min_deg);
    m.at("fov_max_deg").get_to(c.sensor.fov_max_deg);
    m.at("max_range").get_to(c.sensor.max_range);
    m.at("azimuth_step_deg").get_to(c.sensor.azimuth_step_deg);
    m.at("mount_height").get_to(c.sensor.mount_height);
    m.at("asphalt_mean").get_to(c.sensor.asphalt_mean);
    m.at("asphalt_sigma").get_to(c.sensor.asphalt_sigma);
    m.at("paint_mean").get_to(c.sensor.paint_mean);
    m.at("paint_sigma").get_to(c.sensor.paint_sigma);
    m.at("range_noise").get_to(c.sensor.range_noise);
    m.at("point_dropout").get_to(c.sensor.point_dropout);

    PipelineParams& p = c.pipeline;
    const Json& pre = j.at("preprocess");
    p.ring_window = {pre.at("ring_window").at(0).get<int>(), pre.at("ring_window").at(1).get<int>()};
    pre.at("ring_gap_factor").get_to(p.preprocess.ring_gap_factor);
    pre.at("min_height_step").get_to(p.preprocess.min_height_step);
    pre.at("max_lateral").get_to(p.preprocess.max_lateral);
    pre.at("max_residual").get_to(p.preprocess.max_residual);
    pre.at("min_side_points").get_to(p.preprocess.min_side_points);
    pre.at("max_flat_spacing").get_to(p.preprocess.max_flat_spacing);
    pre.at("boundary_step").get_to(p.preprocess.boundary_step);
    pre.at("extrapolation").get_to(p.preprocess.extrapolation);
    pre.at("corridor_half_width").get_to(p.preprocess.corridor_half_width);
    pre.at("grid_size").get_to(p.preprocess.grid_size);
    pre.at("max_height_variance").get_to(p.preprocess.max_height_variance);
    pre.at("compression_height_span").get_to(p.preprocess.compression_height_span);
    pre.at("obstacle_height").get_to(p.preprocess.obstacle_height);
    pre.at("neighbor_cells").get_to(p.preprocess.neighbor_cells);

    const Json& ex = j.at("extraction");
    ex.at("radial_breaks").get_to(p.extraction.radial_breaks);
    ex.at("angular_sectors").get_to(p.extraction.angular_sectors);
    ex.at("rough_threshold").get_to(p.extraction.rough_threshold);
    ex.at("min_count").get_to(p.extraction.min_count);
    p.extraction.objective = parse_objective(ex.at("objective").get<std::string>());
    if (ex.at("fixed_threshold").is_null()) {
      p.extraction.fixed_threshold.reset();
    } else {
      p.extraction.fixed_threshold = ex.at("fixed_threshold").get<int>();
    }

    j.at("accumulate").at("pose_tolerance").get_to(p.pose_tolerance);
    j.at("raster").at("resolution").get_to(p.raster.resolution);
    j.at("raster").at("min_hits").get_to(p.raster.min_hits);

    const Json& cl = j.at("clustering");
    cl.at("k").get_to(p.precluster.k);
    cl.at("min_cells").get_to(p.precluster.min_cells);
    cl.at("radius").get_to(p.recluster.radius);
    cl.at("kappa").get_to(p.recluster.kappa);
    cl.at("vote_fraction").get_to(p.recluster.vote_fraction);
    cl.at("sigma_min").get_to(p.recluster.sigma_min);
    cl.at("epsilon").get_to(p.recluster.epsilon);
    cl.at("quantization_guard").get_to(p.recluster.quantization_guard);

    const Json& r = j.at("recognition");
    ShapeThresholds& sh = p.recognition.shape;
    r.at("dash_length_min").get_to(sh.dash_length_min);
    r.at("dash_length_max").get_to(sh.dash_length_max);
    r.at("dash_width_max").get_to(sh.dash_width_max);
    r.at("dash_aspect_min").get_to(sh.dash_aspect_min);
    r.at("solid_length_min").get_to(sh.solid_length_min);
    r.at("solid_width_max").get_to(sh.solid_width_max);
    r.at("solid_aspect_min").get_to(sh.solid_aspect_min);
    r.at("alpha_d").get_to(p.recognition.gates.alpha_d);
    r.at("alpha_u").get_to(p.recognition.gates.alpha_u);
    r.at("beta_d").get_to(p.recognition.gates.beta_d);
    r.at("beta_u").get_to(p.recognition.gates.beta_u);
    r.at("window").get_to(p.recognition.window);
    r.at("neighbor_radius").get_to(p.recognition.neighbor_radius);

    const Json& lm = j.at("lane_model");
    PredictionParams& pr = p.chain.prediction;
    lm.at("d0").get_to(pr.d0);
    lm.at("lambda").get_to(pr.lambda);
    lm.at("w_theta").get_to(pr.w_theta);
    lm.at("h_theta").get_to(pr.h_theta);
    lm.at("stats_window").get_to(pr.window);
    lm.at("accept_threshold").get_to(pr.accept_threshold);
    lm.at("max_skip").get_to(pr.max_skip);
    lm.at("skeleton_step").get_to(p.chain.skeleton_step);
    lm.at("include_stop_lines").get_to(p.chain.include_stop_lines);
    lm.at("piece_length").get_to(p.fit.piece_length);
    lm.at("sigma_m").get_to(p.fit.sigma_m);
    lm.at("prior_variance").get_to(p.fit.prior_variance);
    lm.at("anchor_sigma").get_to(p.fit.anchor_sigma);
    lm.at("degeneracy_ratio").get_to(p.fit.degeneracy_ratio);

    j.at("evaluation").at("iou_min").get_to(p.match.iou_min);
    j.at("evaluation").at("rmse_step").get_to(c.rmse_step);
    const Json& paths = j.at("paths");
    paths.at("frames").get_to(c.paths.frames);
    paths.at("poses").get_to(c.paths.poses);
    paths.at("truth").get_to(c.paths.truth);
    paths.at("out").get_to(c.paths.out);
    j.at("threads").get_to(c.threads);
    j.at("seed").get_to(c.seed);
    j.at("debug_rasters").get_to(c.debug_rasters);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_error, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

/// Applies one `key.path=value` override; the value is read as JSON when it
/// parses, else as a string.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::config_error, "override must be KEY=VALUE: " + assignment);
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  const Json defaults = to_json(PipelineConfig{});
  const Json* d = &defaults;
  Json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!d->is_object() || !d->contains(parts[i])) throw Error(ErrorCode::config_error, "unknown key '" + key + "'");
    d = &d->at(parts[i]);
    if (!node->is_object()) *node = Json::object();
    node = &(*node)[parts[i]];
  }
  *node = value;
}

inline Json read_json_file(const std::string& path, ErrorCode code) {
  std::ifstream in(path);
  if (!in) throw Error(code, "cannot open " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(code, "malformed JSON in " + path);
  return j;
}

inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Json j = path.empty() ? Json::object() : read_json_file(path, ErrorCode::config_error);
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

/// Hash of the settings that affect results (threads, paths and debug output excluded).
inline std::string config_hash(const PipelineConfig& c) {
  Json j = to_json(c);
  j.erase("threads");
  j.erase("paths");
  j.erase("debug_rasters");
  return hex64(fnv1a(j.dump()));
}

}  // namespace lanemap
