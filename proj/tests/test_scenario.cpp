// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <stdexcept>

#include "cobev/scenario.hpp"

using namespace cobev;

namespace {

const char* kMinimal = R"({
  "schema_version": 1,
  "seed": 7,
  "frames": 4,
  "grid": { "half_extent": 16.0, "resolution": 2.0 },
  "agents": { "count": 2 },
  "boxes": { "count": 3 }
})";

}  // namespace

TEST_CASE("parse_scenario fills defaults from a minimal document") {
    const Scenario s = parse_scenario(kMinimal);
    CHECK(s.seed == 7);
    CHECK(s.frames == 4);
    CHECK(s.scene.grid.rows == 16);
    CHECK(s.scene.agent_count == 2);
    CHECK(s.scene.box_count == 3);
    CHECK(s.detector_profiles.size() == 2);
    CHECK(s.detection_threshold == 0.15);
    CHECK(s.detector_profiles[0].visibility.full());
}

TEST_CASE("parse_scenario reads the benchmark file") {
    const Scenario s = load_scenario(COBEV_SCENARIO_DIR "/benchmark.json");
    CHECK(s.name == "benchmark");
    CHECK(s.frames == 200);
    CHECK(s.scene.agent_count == 5);
    CHECK(s.scene.grid.rows == 64);
    CHECK(s.scene.grid.cols == 64);
    CHECK(s.scene.feature_channels == 8);
    // Complementary occlusion sectors rotate across the five agents.
    CHECK_FALSE(s.detector_profiles[0].visibility.full());
    CHECK(s.detector_profiles[1].visibility.center ==
          doctest::Approx(2.0 * 3.14159265358979 / 5.0));
    CHECK(s.detector_profiles[0].miss_rate == doctest::Approx(0.15));
}

TEST_CASE("parse_scenario rejects malformed documents") {
    CHECK_THROWS_WITH_AS(parse_scenario("not json"),
                         doctest::Contains("invalid JSON"), std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_scenario(R"({"schema_version": 2, "seed": 1})"),
                         doctest::Contains("schema_version"), std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_scenario(R"({"seed": 1})"),
                         doctest::Contains("schema_version"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        parse_scenario(
            R"({"schema_version": 1, "seed": 1, "frames": 1, "turbo": true,
                "grid": {"half_extent": 8.0, "resolution": 1.0},
                "agents": {"count": 1}, "boxes": {"count": 1}})"),
        doctest::Contains("unknown top-level key"), std::runtime_error);
    // Grid extent not an integer number of cells.
    CHECK_THROWS_AS(
        parse_scenario(
            R"({"schema_version": 1, "seed": 1, "frames": 1,
                "grid": {"half_extent": 8.1, "resolution": 1.0},
                "agents": {"count": 1}, "boxes": {"count": 1}})"),
        std::invalid_argument);
}

TEST_CASE("parse_scenario supports fixed agent positions and per-agent detectors") {
    const char* doc = R"({
      "schema_version": 1,
      "seed": 3,
      "frames": 2,
      "grid": { "half_extent": 16.0, "resolution": 2.0 },
      "agents": { "positions": [[1, 2, 40], [-5, 0, 44]] },
      "boxes": { "count": 2 },
      "detector_per_agent": [
        { "miss_rate": 0.1 },
        { "miss_rate": 0.4, "confidence": { "true_mean": 0.9 } }
      ]
    })";
    const Scenario s = parse_scenario(doc);
    CHECK(s.scene.agent_count == 2);
    CHECK(s.scene.fixed_agent_positions[1] == Vec3{-5, 0, 44});
    CHECK(s.detector_profiles[0].miss_rate == doctest::Approx(0.1));
    CHECK(s.detector_profiles[1].miss_rate == doctest::Approx(0.4));
    CHECK(s.detector_profiles[1].calibration.true_mean == doctest::Approx(0.9));
}

TEST_CASE("scenario validation catches inconsistent configurations") {
    Scenario s = parse_scenario(kMinimal);
    s.frames = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = parse_scenario(kMinimal);
    s.detector_profiles.pop_back();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = parse_scenario(kMinimal);
    s.detection_threshold = 1.5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
