#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lanemap/accumulate.hpp"
#include "lanemap/clustering.hpp"
#include "lanemap/config.hpp"
#include "lanemap/error.hpp"
#include "lanemap/frame.hpp"
#include "lanemap/lane_model.hpp"
#include "lanemap/pipeline.hpp"
#include "lanemap/recognition.hpp"
#include "lanemap/scene.hpp"

namespace lanemap {

inline constexpr std::string_view kFramesHeader = "frame_id,timestamp,ring,azimuth,x,y,z,intensity";
inline constexpr std::string_view kPosesHeader = "frame_id,timestamp,x,y,z,roll,pitch,yaw";
inline constexpr std::array<char, 4> kBinaryMagic{'L', 'M', 'F', '1'};
inline constexpr int kMapSchemaVersion = 1;

namespace detail {

/// Fixed notation with at most 9 fractional digits, trailing zeros removed.
inline std::string fixed9(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 9);
  if (ec != std::errc{}) throw Error(ErrorCode::format_error, "value not representable");
  std::string s(buf, end);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

/// 17 significant digits.
inline std::string sig17(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc{}) throw Error(ErrorCode::format_error, "value not representable");
  return std::string(buf, end);
}

template <class T>
bool parse_field(std::string_view f, T& out) {
  if (f.empty()) return false;
  const char* b = f.data();
  const char* e = b + f.size();
  if constexpr (std::is_floating_point_v<T>) {
    if (*b == '+') ++b;
  }
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && p == e;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t c = line.find(',', start);
    out.push_back(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

struct FrameRecord {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  ScanPoint point;
};

inline FrameRecord parse_frame_record(std::string_view line, std::size_t line_no) {
  const auto f = split_csv(line);
  if (f.size() != 8) throw ParseError("expected 8 fields, got " + std::to_string(f.size()), line_no);
  FrameRecord r;
  ScanPoint& p = r.point;
  if (!parse_field(f[0], r.frame_id) || !parse_field(f[1], r.timestamp) || !parse_field(f[2], p.ring) ||
      !parse_field(f[3], p.azimuth) || !parse_field(f[4], p.position.x) || !parse_field(f[5], p.position.y) ||
      !parse_field(f[6], p.position.z) || !parse_field(f[7], p.intensity)) {
    throw ParseError("malformed frame record", line_no);
  }
  return r;
}

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.write(b, sizeof(T));
}

template <class T>
bool get(std::istream& in, T& v) {
  char b[sizeof(T)];
  if (!in.read(b, sizeof(T))) return false;
  std::memcpy(&v, b, sizeof(T));
  return true;
}

inline std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

inline std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

enum class FrameFormat { csv, binary };

/// Streams frames from a CSV or LMF1 file, one frame per call.
class FrameReader {
 public:
  explicit FrameReader(std::unique_ptr<std::istream> in) : in_(std::move(in)) {
    char magic[4] = {};
    in_->read(magic, 4);
    const auto got = in_->gcount();
    if (got == 4 && std::memcmp(magic, kBinaryMagic.data(), 4) == 0) {
      format_ = FrameFormat::binary;
      return;
    }
    in_->clear();
    in_->seekg(0);
    format_ = FrameFormat::csv;
    std::string header;
    if (!std::getline(*in_, header)) {
      done_ = true;
      return;
    }
    line_ = 1;
    if (detail::strip_cr(header) != kFramesHeader) throw ParseError("unexpected frames header", 1);
  }

  static FrameReader open(const std::string& path) {
    auto f = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*f) throw ParseError("cannot open " + path);
    return FrameReader(std::move(f));
  }

  FrameFormat format() const { return format_; }

  std::optional<LidarFrame> next() {
    if (done_) return std::nullopt;
    std::optional<LidarFrame> f = format_ == FrameFormat::csv ? next_csv() : next_binary();
    if (f) {
      if (have_last_ && f->frame_id <= last_id_) {
        throw Error(ErrorCode::format_error, "frame ids not increasing at frame " + std::to_string(f->frame_id) +
                                                 (format_ == FrameFormat::csv ? " (line " + std::to_string(frame_line_) + ")" : ""));
      }
      have_last_ = true;
      last_id_ = f->frame_id;
    }
    return f;
  }

 private:
  std::optional<LidarFrame> next_csv() {
    LidarFrame frame;
    bool open = false;
    if (pending_) {
      frame.frame_id = pending_->frame_id;
      frame.timestamp = pending_->timestamp;
      frame.points.push_back(pending_->point);
      frame_line_ = pending_line_;
      pending_.reset();
      open = true;
    }
    std::string line;
    while (std::getline(*in_, line)) {
      ++line_;
      const std::string_view v = detail::strip_cr(line);
      if (v.empty()) continue;
      detail::FrameRecord r = detail::parse_frame_record(v, line_);
      if (!open) {
        frame.frame_id = r.frame_id;
        frame.timestamp = r.timestamp;
        frame_line_ = line_;
        open = true;
      } else if (r.frame_id != frame.frame_id) {
        pending_ = r;
        pending_line_ = line_;
        return frame;
      }
      frame.points.push_back(r.point);
    }
    done_ = true;
    if (!open) return std::nullopt;
    return frame;
  }

  std::optional<LidarFrame> next_binary() {
    LidarFrame frame;
    if (!detail::get(*in_, frame.frame_id)) {
      if (in_->gcount() != 0) throw ParseError("truncated binary frame header");
      done_ = true;
      return std::nullopt;
    }
    std::uint64_t n = 0;
    if (!detail::get(*in_, frame.timestamp) || !detail::get(*in_, n)) throw ParseError("truncated binary frame header");
    frame.points.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
    for (std::uint64_t i = 0; i < n; ++i) {
      ScanPoint p;
      std::int32_t ring = 0;
      if (!detail::get(*in_, p.position.x) || !detail::get(*in_, p.position.y) || !detail::get(*in_, p.position.z) ||
          !detail::get(*in_, p.intensity) || !detail::get(*in_, p.azimuth) || !detail::get(*in_, ring)) {
        throw ParseError("truncated binary frame " + std::to_string(frame.frame_id));
      }
      p.ring = ring;
      frame.points.push_back(p);
    }
    return frame;
  }

  std::unique_ptr<std::istream> in_;
  FrameFormat format_ = FrameFormat::csv;
  bool done_ = false;
  std::size_t line_ = 0;
  std::size_t frame_line_ = 0;
  std::optional<detail::FrameRecord> pending_;
  std::size_t pending_line_ = 0;
  bool have_last_ = false;
  std::uint64_t last_id_ = 0;
};

inline std::vector<LidarFrame> read_frames(std::istream& in) {
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  FrameReader reader(std::make_unique<std::istringstream>(std::move(data)));
  std::vector<LidarFrame> out;
  while (auto f = reader.next()) out.push_back(std::move(*f));
  return out;
}

inline std::vector<LidarFrame> load_frames(const std::string& path) {
  FrameReader reader = FrameReader::open(path);
  std::vector<LidarFrame> out;
  while (auto f = reader.next()) out.push_back(std::move(*f));
  return out;
}

class FrameWriter {
 public:
  FrameWriter(std::ostream& out, FrameFormat format) : out_(out), format_(format) {
    if (format_ == FrameFormat::csv) {
      out_ << kFramesHeader << '\n';
    } else {
      out_.write(kBinaryMagic.data(), 4);
    }
  }

  void write(const LidarFrame& f) {
    if (format_ == FrameFormat::csv) {
      const std::string head = std::to_string(f.frame_id) + ',' + detail::fixed9(f.timestamp) + ',';
      for (const ScanPoint& p : f.points) {
        out_ << head << p.ring << ',' << detail::fixed9(p.azimuth) << ',' << detail::fixed9(p.position.x) << ','
             << detail::fixed9(p.position.y) << ',' << detail::fixed9(p.position.z) << ','
             << detail::fixed9(p.intensity) << '\n';
      }
      return;
    }
    detail::put(out_, f.frame_id);
    detail::put(out_, f.timestamp);
    detail::put(out_, static_cast<std::uint64_t>(f.points.size()));
    for (const ScanPoint& p : f.points) {
      detail::put(out_, p.position.x);
      detail::put(out_, p.position.y);
      detail::put(out_, p.position.z);
      detail::put(out_, p.intensity);
      detail::put(out_, p.azimuth);
      detail::put(out_, static_cast<std::int32_t>(p.ring));
    }
  }

 private:
  std::ostream& out_;
  FrameFormat format_;
};

inline void write_frames(std::ostream& out, std::span<const LidarFrame> frames, FrameFormat format = FrameFormat::csv) {
  FrameWriter w(out, format);
  for (const LidarFrame& f : frames) w.write(f);
}

inline void save_frames(const std::string& path, std::span<const LidarFrame> frames,
                        FrameFormat format = FrameFormat::csv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + path);
  write_frames(out, frames, format);
}

inline void write_poses(std::ostream& out, std::span<const PoseRecord> poses) {
  out << kPosesHeader << '\n';
  for (const PoseRecord& r : poses) {
    const Pose& p = r.pose;
    out << r.frame_id << ',' << detail::fixed9(p.timestamp) << ',' << detail::fixed9(p.position.x) << ','
        << detail::fixed9(p.position.y) << ',' << detail::fixed9(p.position.z) << ',' << detail::fixed9(p.roll) << ','
        << detail::fixed9(p.pitch) << ',' << detail::fixed9(p.yaw) << '\n';
  }
}

inline std::vector<PoseRecord> read_poses(std::istream& in) {
  std::vector<PoseRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (detail::strip_cr(line) != kPosesHeader) throw ParseError("unexpected poses header", 1);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view v = detail::strip_cr(line);
    if (v.empty()) continue;
    const auto f = detail::split_csv(v);
    if (f.size() != 8) throw ParseError("expected 8 fields, got " + std::to_string(f.size()), n);
    PoseRecord r;
    Pose& p = r.pose;
    if (!detail::parse_field(f[0], r.frame_id) || !detail::parse_field(f[1], p.timestamp) ||
        !detail::parse_field(f[2], p.position.x) || !detail::parse_field(f[3], p.position.y) ||
        !detail::parse_field(f[4], p.position.z) || !detail::parse_field(f[5], p.roll) ||
        !detail::parse_field(f[6], p.pitch) || !detail::parse_field(f[7], p.yaw)) {
      throw ParseError("malformed pose record", n);
    }
    out.push_back(r);
  }
  return out;
}

inline std::vector<PoseRecord> load_poses(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  return read_poses(in);
}

inline void save_poses(const std::string& path, std::span<const PoseRecord> poses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + path);
  write_poses(out, poses);
}

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    if (!in) break;
  }
  return hex64(h);
}

struct InputHash {
  std::string name;
  std::string fnv1a;
};

struct LaneMapDocument {
  int schema_version = kMapSchemaVersion;
  Point3 origin;  ///< local ENU origin of the map coordinates
  LaneMap map;
  std::string config_hash;
  std::vector<InputHash> inputs;
};

inline MarkType parse_mark_type(const std::string& s) {
  for (MarkType t : kMarkTypes) {
    if (s == to_string(t)) return t;
  }
  throw Error(ErrorCode::format_error, "unknown mark type '" + s + "'");
}

/// Serializes a map document; coefficients carry 17 significant digits.
inline std::string write_map(const LaneMapDocument& doc) {
  std::set<int> ids;
  for (const LaneLine& l : doc.map.lines) {
    if (!ids.insert(l.id).second) throw Error(ErrorCode::format_error, "duplicate lane line id " + std::to_string(l.id));
  }
  using detail::sig17;
  std::string o;
  o += "{\n  \"schema_version\": " + std::to_string(doc.schema_version) + ",\n";
  o += "  \"origin\": [" + sig17(doc.origin.x) + ", " + sig17(doc.origin.y) + ", " + sig17(doc.origin.z) + "],\n";
  o += "  \"lane_lines\": [";
  for (std::size_t i = 0; i < doc.map.lines.size(); ++i) {
    const LaneLine& l = doc.map.lines[i];
    o += i ? ",\n" : "\n";
    o += "    {\"id\": " + std::to_string(l.id) + ", \"type\": \"" + to_string(l.type) + "\", \"members\": [";
    for (std::size_t m = 0; m < l.members.size(); ++m) o += (m ? ", " : "") + std::to_string(l.members[m]);
    o += "],\n     \"pieces\": [";
    for (std::size_t k = 0; k < l.curve.pieces.size(); ++k) {
      const CurvePiece& p = l.curve.pieces[k];
      o += k ? ",\n       " : "\n       ";
      o += "{\"s_t\": " + sig17(p.s_t) + ", \"px\": [";
      for (int r = 0; r < 4; ++r) o += (r ? ", " : "") + sig17(p.px[r]);
      o += "], \"py\": [";
      for (int r = 0; r < 4; ++r) o += (r ? ", " : "") + sig17(p.py[r]);
      o += "]}";
    }
    o += l.curve.pieces.empty() ? "]" : "\n     ]";
    o += ",\n     \"s_end\": " + sig17(l.curve.s_end()) + "}";
  }
  o += doc.map.lines.empty() ? "],\n" : "\n  ],\n";
  o += "  \"provenance\": {\"config_hash\": " + Json(doc.config_hash).dump() + ", \"inputs\": [";
  for (std::size_t i = 0; i < doc.inputs.size(); ++i) {
    o += (i ? ", " : "") + std::string("{\"name\": ") + Json(doc.inputs[i].name).dump() +
         ", \"fnv1a\": " + Json(doc.inputs[i].fnv1a).dump() + "}";
  }
  o += "]}\n}\n";
  return o;
}

inline LaneMapDocument read_map(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed map document: ") + e.what(), detail::line_of_offset(text, e.byte));
  }
  LaneMapDocument doc;
  try {
    if (!j.is_object() || !j.contains("schema_version")) throw Error(ErrorCode::format_error, "missing schema_version");
    doc.schema_version = j.at("schema_version").get<int>();
    if (doc.schema_version != kMapSchemaVersion) {
      throw Error(ErrorCode::version_error, "unsupported schema version " + std::to_string(doc.schema_version));
    }
    const Json& origin = j.at("origin");
    doc.origin = {origin.at(0).get<double>(), origin.at(1).get<double>(), origin.at(2).get<double>()};
    std::set<int> ids;
    for (const Json& l : j.at("lane_lines")) {
      LaneLine line;
      line.id = l.at("id").get<int>();
      if (!ids.insert(line.id).second) throw Error(ErrorCode::format_error, "duplicate lane line id " + std::to_string(line.id));
      line.type = parse_mark_type(l.at("type").get<std::string>());
      if (l.contains("members")) l.at("members").get_to(line.members);
      const double s_end = l.at("s_end").get<double>();
      const Json& pieces = l.at("pieces");
      for (std::size_t k = 0; k < pieces.size(); ++k) {
        CurvePiece p;
        p.s_t = pieces[k].at("s_t").get<double>();
        if (pieces[k].at("px").size() != 4 || pieces[k].at("py").size() != 4) {
          throw Error(ErrorCode::format_error, "pieces need four coefficients per axis");
        }
        for (std::size_t r = 0; r < 4; ++r) {
          p.px[r] = pieces[k].at("px")[r].get<double>();
          p.py[r] = pieces[k].at("py")[r].get<double>();
        }
        line.curve.pieces.push_back(p);
      }
      for (std::size_t k = 0; k < line.curve.pieces.size(); ++k) {
        line.curve.pieces[k].s_end = k + 1 < line.curve.pieces.size() ? line.curve.pieces[k + 1].s_t : s_end;
      }
      doc.map.lines.push_back(std::move(line));
    }
    const Json& prov = j.at("provenance");
    prov.at("config_hash").get_to(doc.config_hash);
    for (const Json& in : prov.at("inputs")) doc.inputs.push_back({in.at("name").get<std::string>(), in.at("fnv1a").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad map document: ") + e.what());
  }
  return doc;
}

inline LaneMapDocument load_map(const std::string& path) { return read_map(detail::read_all(path)); }

// Ground truth and intermediates as JSON (doubles round-trip exactly).

inline Json points_json(std::span<const Point2> pts) {
  Json a = Json::array();
  for (const Point2& p : pts) a.push_back({p.x, p.y});
  return a;
}

inline std::vector<Point2> points_from_json(const Json& a) {
  std::vector<Point2> out;
  for (const Json& p : a) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

inline Json truth_json(const GroundTruth& t) {
  Json marks = Json::array();
  for (const TruthMark& m : t.marks) {
    marks.push_back({{"id", m.id},
                     {"type", to_string(m.type)},
                     {"boundary", m.boundary},
                     {"lane", m.lane},
                     {"station_begin", m.station_begin},
                     {"station_end", m.station_end},
                     {"present", m.present},
                     {"polygon", points_json(m.polygon)}});
  }
  Json lanes = Json::array();
  for (const TruthLane& l : t.lanes) {
    lanes.push_back({{"boundary", l.boundary}, {"type", to_string(l.type)}, {"polyline", points_json(l.polyline)}});
  }
  return {{"marks", marks},
          {"lanes", lanes},
          {"left_curb", points_json(t.left_curb)},
          {"right_curb", points_json(t.right_curb)}};
}

inline GroundTruth truth_from_json(const Json& j) {
  GroundTruth t;
  try {
    for (const Json& m : j.at("marks")) {
      TruthMark tm;
      tm.id = m.at("id").get<int>();
      tm.type = parse_mark_type(m.at("type").get<std::string>());
      tm.boundary = m.at("boundary").get<int>();
      tm.lane = m.at("lane").get<int>();
      tm.station_begin = m.at("station_begin").get<double>();
      tm.station_end = m.at("station_end").get<double>();
      tm.present = m.at("present").get<bool>();
      tm.polygon = points_from_json(m.at("polygon"));
      t.marks.push_back(std::move(tm));
    }
    for (const Json& l : j.at("lanes")) {
      t.lanes.push_back({l.at("boundary").get<int>(), parse_mark_type(l.at("type").get<std::string>()),
                         points_from_json(l.at("polyline"))});
    }
    t.left_curb = points_from_json(j.at("left_curb"));
    t.right_curb = points_from_json(j.at("right_curb"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad truth document: ") + e.what());
  }
  return t;
}

inline GroundTruth load_truth(const std::string& path) {
  const std::string text = detail::read_all(path);
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("malformed truth document " + path);
  return truth_from_json(j);
}

inline Json mbr_json(const Mbr& m) {
  return {{"center", {m.center.x, m.center.y}},
          {"half_length", m.half_length},
          {"half_width", m.half_width},
          {"orientation", m.orientation}};
}

inline Json raster_json(const RasterImage& img) {
  Json cells = Json::array();
  for (std::size_t i = 0; i < img.hits.size(); ++i) {
    if (img.hits[i]) cells.push_back({i, img.hits[i], img.intensity_milli[i]});
  }
  return {{"origin", {img.grid.origin.x, img.grid.origin.y}},
          {"resolution", img.grid.resolution},
          {"width", img.grid.width},
          {"height", img.grid.height},
          {"min_hits", img.min_hits},
          {"cells", cells}};
}

inline Json clusters_json(std::span<const MarkCluster> clusters) {
  Json a = Json::array();
  for (const MarkCluster& c : clusters) {
    a.push_back({{"id", c.id}, {"points", c.point_count}, {"mbr", mbr_json(c.mbr)}, {"cells", c.cells}});
  }
  return a;
}

inline Json classified_json(std::span<const ClassifiedCluster> classified) {
  Json a = Json::array();
  for (const ClassifiedCluster& c : classified) {
    a.push_back({{"id", c.base.id},
                 {"label", to_string(c.label)},
                 {"points", c.base.point_count},
                 {"mbr", mbr_json(c.base.mbr)},
                 {"cells", c.base.cells}});
  }
  return a;
}

/// Rebuilds classified clusters from their cells on `img`; dashed features
/// are recomputed from the cell centers.
inline std::vector<ClassifiedCluster> classified_from_json(const Json& a, const RasterImage& img) {
  std::vector<ClassifiedCluster> out;
  try {
    for (const Json& c : a) {
      ClassifiedCluster cc;
      cc.label = parse_mark_type(c.at("label").get<std::string>());
      cc.base = detail::make_cluster(c.at("id").get<int>(), c.at("cells").get<std::vector<std::size_t>>(), img);
      if (cc.label == MarkType::dashed) cc.feature = dash_feature(cc.base.centers);
      out.push_back(std::move(cc));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad classified document: ") + e.what());
  }
  return out;
}

inline std::vector<MarkCluster> clusters_from_json(const Json& a, const RasterImage& img) {
  std::vector<MarkCluster> out;
  try {
    for (const Json& c : a) {
      out.push_back(detail::make_cluster(c.at("id").get<int>(), c.at("cells").get<std::vector<std::size_t>>(), img));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad clusters document: ") + e.what());
  }
  return out;
}

inline RasterGrid grid_from_json(const Json& j) {
  try {
    return {{j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()},
            j.at("resolution").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad raster document: ") + e.what());
  }
}

inline RasterImage raster_from_json(const Json& j) {
  RasterImage img;
  img.grid = grid_from_json(j);
  try {
    j.at("min_hits").get_to(img.min_hits);
    img.hits.assign(img.grid.size(), 0);
    img.intensity_milli.assign(img.grid.size(), 0);
    for (const Json& c : j.at("cells")) {
      const std::size_t i = c.at(0).get<std::size_t>();
      if (i >= img.grid.size()) throw Error(ErrorCode::format_error, "raster cell index out of range");
      img.hits[i] = c.at(1).get<std::uint32_t>();
      img.intensity_milli[i] = c.at(2).get<std::int64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad raster document: ") + e.what());
  }
  return img;
}

inline constexpr std::string_view kCloudHeader = "frame_id,x,y,z,intensity";

/// Marking cloud as CSV with 17 significant digits (lossless).
inline void write_cloud(std::ostream& out, std::span<const CloudPoint> cloud) {
  out << kCloudHeader << '\n';
  for (const CloudPoint& p : cloud) {
    out << p.frame_id << ',' << detail::sig17(p.position.x) << ',' << detail::sig17(p.position.y) << ','
        << detail::sig17(p.position.z) << ',' << detail::sig17(p.intensity) << '\n';
  }
}

inline std::vector<CloudPoint> read_cloud(std::istream& in) {
  std::vector<CloudPoint> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (detail::strip_cr(line) != kCloudHeader) throw ParseError("unexpected cloud header", 1);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view v = detail::strip_cr(line);
    if (v.empty()) continue;
    const auto f = detail::split_csv(v);
    CloudPoint p;
    if (f.size() != 5 || !detail::parse_field(f[0], p.frame_id) || !detail::parse_field(f[1], p.position.x) ||
        !detail::parse_field(f[2], p.position.y) || !detail::parse_field(f[3], p.position.z) ||
        !detail::parse_field(f[4], p.intensity)) {
      throw ParseError("malformed cloud record", n);
    }
    out.push_back(p);
  }
  return out;
}

inline Json load_json(const std::string& path) {
  const std::string text = detail::read_all(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed JSON in " + path, detail::line_of_offset(text, e.byte));
  }
}

inline Json indicators_json(const Indicators& ind) {
  return {{"precision", ind.precision}, {"recall", ind.recall}, {"fscore", ind.fscore}, {"defined", ind.defined}};
}

inline Json metrics_json(const EvaluationReport& r) {
  Json by_class = Json::object();
  for (MarkType t : kMarkTypes) {
    const ClassCounts& c = r.matching.counts[t];
    by_class[to_string(t)] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  }
  Json lanes = Json::array();
  for (const LaneAccuracy& a : r.lanes) {
    lanes.push_back({{"line_id", a.line_id}, {"type", to_string(a.type)}, {"boundary", a.boundary}, {"rmse_cm", a.rmse_cm}});
  }
  const ClassCounts total = r.matching.counts.total();
  return {{"truth_objects", r.truth_objects},
          {"counts", {{"tp", total.tp}, {"fp", total.fp}, {"fn", total.fn}}},
          {"by_class", by_class},
          {"indicators", indicators_json(r.indicators)},
          {"f1", r.standard.fscore},
          {"lanes", lanes}};
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + path);
  out << j.dump(1) << '\n';
}

}  // namespace lanemap
