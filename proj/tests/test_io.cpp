#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "lanemap/io.hpp"

using namespace lanemap;

namespace {

double round9(double v) { return std::round(v * 1e9) / 1e9; }

std::vector<LidarFrame> sample_frames(bool rounded, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  std::vector<LidarFrame> frames;
  for (std::uint64_t id : {3u, 4u, 9u}) {
    LidarFrame f;
    f.frame_id = id;
    f.timestamp = 0.1 * static_cast<double>(id) + 1e-4;
    for (int k = 0; k < 25; ++k) {
      ScanPoint p;
      p.position = {u(rng), u(rng), u(rng) / 20.0};
      p.intensity = std::abs(u(rng)) * 6.0;
      p.ring = k % 64;
      p.azimuth = u(rng) / 13.0;
      if (rounded) {
        p.position = {round9(p.position.x), round9(p.position.y), round9(p.position.z)};
        p.intensity = round9(p.intensity);
        p.azimuth = round9(p.azimuth);
      }
      f.points.push_back(p);
    }
    if (rounded) f.timestamp = round9(f.timestamp);
    frames.push_back(f);
  }
  return frames;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void expect_same(const std::vector<LidarFrame>& a, const std::vector<LidarFrame>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frame_id, b[i].frame_id);
    EXPECT_TRUE(bits_equal(a[i].timestamp, b[i].timestamp));
    ASSERT_EQ(a[i].points.size(), b[i].points.size());
    for (std::size_t k = 0; k < a[i].points.size(); ++k) {
      const ScanPoint &p = a[i].points[k], &q = b[i].points[k];
      EXPECT_TRUE(bits_equal(p.position.x, q.position.x));
      EXPECT_TRUE(bits_equal(p.position.y, q.position.y));
      EXPECT_TRUE(bits_equal(p.position.z, q.position.z));
      EXPECT_TRUE(bits_equal(p.intensity, q.intensity));
      EXPECT_TRUE(bits_equal(p.azimuth, q.azimuth));
      EXPECT_EQ(p.ring, q.ring);
    }
  }
}

std::string csv_of(std::span<const LidarFrame> f, FrameFormat fmt = FrameFormat::csv) {
  std::ostringstream s;
  write_frames(s, f, fmt);
  return s.str();
}

std::vector<LidarFrame> parse(const std::string& text) {
  std::istringstream in(text);
  return read_frames(in);
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_input;
}

}  // namespace

TEST(FramesCsv, RoundTripIsBitIdentical) {
  const auto frames = sample_frames(true);
  const std::string text = csv_of(frames);
  const auto back = parse(text);
  expect_same(frames, back);
  EXPECT_EQ(csv_of(back), text);
}

TEST(FramesCsv, RewriteIsStableForArbitraryValues) {
  const std::string text = csv_of(sample_frames(false));
  const auto once = parse(text);
  EXPECT_EQ(csv_of(once), text);
  expect_same(once, parse(csv_of(once)));
}

TEST(FramesCsv, EmptyInputs) {
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse(std::string(kFramesHeader) + "\n").empty());
}

TEST(FramesCsv, MalformedRecordReportsLine) {
  const std::string text = std::string(kFramesHeader) + "\n1,0.1,3,0.5,1,2,3,40\n1,0.1,3,abc,1,2,3,40\n";
  try {
    parse(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse(std::string(kFramesHeader) + "\n1,0.1,3,0.5,1,2,3\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_EQ(code_of([] { parse("frame,ts\n"); }), ErrorCode::parse_error);
}

TEST(FramesCsv, NonMonotoneFrameIdsRejected) {
  const std::string h = std::string(kFramesHeader) + "\n";
  EXPECT_EQ(code_of([&] { parse(h + "2,0,0,0,1,1,1,1\n1,0,0,0,1,1,1,1\n"); }), ErrorCode::format_error);
  EXPECT_EQ(code_of([&] { parse(h + "1,0,0,0,1,1,1,1\n2,0,0,0,1,1,1,1\n1,0,0,0,1,1,1,1\n"); }),
            ErrorCode::format_error);
}

TEST(FramesCsv, FramesSplitOnIdChange) {
  const auto f = parse(std::string(kFramesHeader) + "\n7,1.5,0,0,1,1,1,1\n7,1.5,1,0,1,1,1,1\n8,1.6,0,0,1,1,1,1\n");
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].frame_id, 7u);
  EXPECT_EQ(f[0].points.size(), 2u);
  EXPECT_EQ(f[1].points.size(), 1u);
  EXPECT_DOUBLE_EQ(f[1].timestamp, 1.6);
}

TEST(FramesBinary, RoundTripAndStreaming) {
  const auto frames = sample_frames(false);
  const std::string bin = csv_of(frames, FrameFormat::binary);
  EXPECT_EQ(bin.substr(0, 4), "LMF1");
  FrameReader reader(std::make_unique<std::istringstream>(bin));
  EXPECT_EQ(reader.format(), FrameFormat::binary);
  std::vector<LidarFrame> back;
  while (auto f = reader.next()) back.push_back(*f);
  expect_same(frames, back);
  EXPECT_EQ(csv_of(back, FrameFormat::binary), bin);
}

TEST(FramesBinary, TruncationIsParseError) {
  const std::string bin = csv_of(sample_frames(false), FrameFormat::binary);
  for (std::size_t cut : {bin.size() - 1, bin.size() - 30, std::size_t{10}}) {
    EXPECT_EQ(code_of([&] { parse(bin.substr(0, cut)); }), ErrorCode::parse_error) << cut;
  }
}

TEST(Poses, RoundTrip) {
  std::vector<PoseRecord> poses;
  for (int i = 0; i < 5; ++i) poses.push_back({static_cast<std::uint64_t>(i), {{i * 2.0, 0.25, 1.8}, 0.0, 0.001, 0.5 * i, 0.1 * i}});
  std::ostringstream out;
  write_poses(out, poses);
  std::istringstream in(out.str());
  const auto back = read_poses(in);
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    EXPECT_EQ(back[i].frame_id, poses[i].frame_id);
    EXPECT_DOUBLE_EQ(back[i].pose.yaw, poses[i].pose.yaw);
    EXPECT_DOUBLE_EQ(back[i].pose.timestamp, poses[i].pose.timestamp);
    EXPECT_DOUBLE_EQ(back[i].pose.position.x, poses[i].pose.position.x);
  }
  std::istringstream bad(std::string(kPosesHeader) + "\n0,0,1,2,3,0,0\n");
  EXPECT_EQ(code_of([&] { read_poses(bad); }), ErrorCode::parse_error);
}

namespace {

LaneMapDocument sample_map() {
  LaneMapDocument doc;
  doc.origin = {1.0 / 3.0, -2.5, 0.0};
  for (int id : {0, 4}) {
    LaneLine l;
    l.id = id;
    l.type = id ? MarkType::solid : MarkType::dashed;
    l.members = {id, id + 1};
    for (int k = 0; k < 2; ++k) {
      CurvePiece p;
      p.s_t = 30.0 * k + 0.1;
      p.s_end = 30.0 * (k + 1) + 0.1;
      p.px = {std::sqrt(2.0) * k, 1.0, 1e-5 / 3.0, -7e-9};
      p.py = {std::numbers::pi, 0.01, 1.0 / 7.0, 3e-12};
      l.curve.pieces.push_back(p);
    }
    doc.map.lines.push_back(l);
  }
  doc.config_hash = "0123456789abcdef";
  doc.inputs = {{"frames", "aaaaaaaaaaaaaaaa"}};
  return doc;
}

}  // namespace

TEST(MapDocument, RoundTripExact) {
  const LaneMapDocument doc = sample_map();
  const std::string text = write_map(doc);
  const LaneMapDocument back = read_map(text);
  ASSERT_EQ(back.map.lines.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const LaneLine &a = doc.map.lines[i], &b = back.map.lines[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.type, b.type);
    EXPECT_EQ(a.members, b.members);
    ASSERT_EQ(b.curve.pieces.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_TRUE(bits_equal(a.curve.pieces[k].s_t, b.curve.pieces[k].s_t));
      EXPECT_TRUE(bits_equal(a.curve.pieces[k].s_end, b.curve.pieces[k].s_end));
      for (int r = 0; r < 4; ++r) {
        EXPECT_TRUE(bits_equal(a.curve.pieces[k].px[r], b.curve.pieces[k].px[r]));
        EXPECT_TRUE(bits_equal(a.curve.pieces[k].py[r], b.curve.pieces[k].py[r]));
      }
    }
  }
  EXPECT_TRUE(bits_equal(back.origin.x, doc.origin.x));
  EXPECT_EQ(back.config_hash, doc.config_hash);
  ASSERT_EQ(back.inputs.size(), 1u);
  EXPECT_EQ(back.inputs[0].fnv1a, "aaaaaaaaaaaaaaaa");
  EXPECT_EQ(write_map(back), text);
}

TEST(MapDocument, SeventeenSignificantDigits) {
  const std::string text = write_map(sample_map());
  EXPECT_NE(text.find("0.33333333333333331"), std::string::npos);
  EXPECT_NE(text.find("3.1415926535897931"), std::string::npos);
}

TEST(MapDocument, Errors) {
  LaneMapDocument dup = sample_map();
  dup.map.lines[1].id = 0;
  EXPECT_EQ(code_of([&] { write_map(dup); }), ErrorCode::format_error);

  std::string text = write_map(sample_map());
  std::string v2 = text;
  v2.replace(v2.find("\"schema_version\": 1"), 19, "\"schema_version\": 2");
  EXPECT_EQ(code_of([&] { read_map(v2); }), ErrorCode::version_error);

  try {
    read_map(text.substr(0, text.size() / 2));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line(), 1u);
  }
  EXPECT_EQ(code_of([] { read_map("{\"schema_version\": 1}"); }), ErrorCode::format_error);
}

TEST(Truth, RoundTrip) {
  SceneSpec spec;
  spec.stop_lines = {{80.0, 0}};
  spec.arrows = {{60.0, 1}};
  spec.dropout = 0.2;
  const GroundTruth t = build_scene(spec);
  const GroundTruth back = truth_from_json(Json::parse(truth_json(t).dump()));
  ASSERT_EQ(back.marks.size(), t.marks.size());
  for (std::size_t i = 0; i < t.marks.size(); ++i) {
    EXPECT_EQ(back.marks[i].type, t.marks[i].type);
    EXPECT_EQ(back.marks[i].present, t.marks[i].present);
    ASSERT_EQ(back.marks[i].polygon.size(), t.marks[i].polygon.size());
    for (std::size_t k = 0; k < t.marks[i].polygon.size(); ++k) {
      EXPECT_TRUE(bits_equal(back.marks[i].polygon[k].x, t.marks[i].polygon[k].x));
    }
  }
  ASSERT_EQ(back.lanes.size(), t.lanes.size());
  EXPECT_EQ(back.lanes[0].polyline.size(), t.lanes[0].polyline.size());
  EXPECT_EQ(back.left_curb.size(), t.left_curb.size());
}
