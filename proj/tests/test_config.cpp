#include <gtest/gtest.h>

#include "lanemap/config.hpp"

using namespace lanemap;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_input;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const Json j = to_json(PipelineConfig{});
  const PipelineConfig c = config_from_json(j);
  EXPECT_EQ(to_json(c).dump(), j.dump());
}

TEST(Config, EmptyObjectGivesDefaults) {
  EXPECT_EQ(to_json(config_from_json(Json::object())).dump(), to_json(PipelineConfig{}).dump());
}

TEST(Config, PartialOverlayKeepsOtherDefaults) {
  const PipelineConfig c = config_from_json(Json::parse(R"({"raster": {"resolution": 0.2}, "threads": 3})"));
  EXPECT_DOUBLE_EQ(c.pipeline.raster.resolution, 0.2);
  EXPECT_EQ(c.pipeline.raster.min_hits, 2);
  EXPECT_EQ(c.threads, 3);
  EXPECT_EQ(c.effective().threads, 3);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"bogus": 1})")); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"raster": {"resolutoin": 0.1}})")); }),
            ErrorCode::config_error);
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"scene": {"obstacles": [{"station": 3, "hue": 1}]}})")); }),
            ErrorCode::config_error);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"raster": {"resolution": "fine"}})")); }),
            ErrorCode::config_error);
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"raster": 3})")); }), ErrorCode::config_error);
}

TEST(Config, NonPositiveResolutionRejected) {
  for (double r : {0.0, -0.1}) {
    Json j = {{"raster", {{"resolution", r}}}};
    EXPECT_EQ(code_of([&] { config_from_json(j); }), ErrorCode::config_error) << r;
  }
}

TEST(Config, InvalidStageParametersBecomeConfigErrors) {
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"clustering": {"k": 4}})")); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"sensor": {"ring_count": 1}})")); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"threads": 0})")); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { config_from_json(Json::parse(R"({"extraction": {"objective": "median"}})")); }),
            ErrorCode::config_error);
}

TEST(Config, Overrides) {
  Json j = Json::object();
  apply_override(j, "raster.resolution=0.25");
  apply_override(j, "extraction.objective=threshold_literal");
  apply_override(j, "extraction.fixed_threshold=120");
  apply_override(j, "scene.centerline=[{\"kind\":\"arc\",\"length\":50,\"radius\":200}]");
  const PipelineConfig c = config_from_json(j);
  EXPECT_DOUBLE_EQ(c.pipeline.raster.resolution, 0.25);
  EXPECT_EQ(c.pipeline.extraction.objective, OtsuObjective::threshold_literal);
  EXPECT_EQ(c.pipeline.extraction.fixed_threshold, 120);
  ASSERT_EQ(c.scene.centerline.size(), 1u);
  EXPECT_EQ(c.scene.centerline[0].kind, CenterlineSegment::Kind::arc);
  EXPECT_DOUBLE_EQ(c.scene.centerline[0].radius, 200.0);
  EXPECT_EQ(code_of([&] { apply_override(j, "raster.nope=1"); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([&] { apply_override(j, "no_equals_sign"); }), ErrorCode::config_error);
}

TEST(Config, EffectiveParamsFollowSensorAndSeed) {
  PipelineConfig c;
  c.sensor.ring_count = 32;
  c.seed = 9;
  const PipelineParams p = c.effective();
  EXPECT_EQ(p.preprocess.elevations.size(), 32u);
  EXPECT_DOUBLE_EQ(p.preprocess.mount_height, c.sensor.mount_height);
  EXPECT_EQ(p.extraction.seed, 9u);
  EXPECT_EQ(c.effective_scene().seed, 9u);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(fnv1a("foobar")), "85944171f73967e8");
}

TEST(Config, HashIgnoresRuntimeSettings) {
  PipelineConfig a, b;
  b.threads = 8;
  b.paths.out = "elsewhere";
  b.paths.frames = "f.csv";
  b.debug_rasters = true;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.pipeline.raster.resolution = 0.2;
  EXPECT_NE(config_hash(a), config_hash(b));
  PipelineConfig s;
  s.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(s));
}
