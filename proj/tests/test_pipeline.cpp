// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>

#include "cobev/pipeline.hpp"

using namespace cobev;

namespace {

Scenario smoke_scenario() {
    return load_scenario(COBEV_SCENARIO_DIR "/smoke.json");
}

Scenario noiseless_scenario() {
    Scenario s = smoke_scenario();
    for (DetectorProfile& p : s.detector_profiles) {
        p.miss_rate = 0.0;
        p.false_positive_rate_per_cell = 0.0;
        p.center_noise_sigma = 0.0;
        p.size_noise_sigma = 0.0;
        p.yaw_noise_sigma = 0.0;
        p.calibration.true_jitter = 0.0;
        p.calibration.false_jitter = 0.0;
        p.visibility = SectorMask{};  // unrestricted
    }
    return s;
}

Strategy grid_strategy(StrategyKind kind, const Scenario& scenario) {
    Strategy strategy;
    strategy.kind = kind;
    strategy.policy.detection_threshold = scenario.detection_threshold;
    strategy.head = HeadParams::zeros(scenario.scene.feature_channels);
    // A hand-built linear decoder: the first feature channel mirrors the
    // sender score map and the box-confidence channel mirrors received
    // detections, so thresholding their sum finds centers without training.
    strategy.head->w_cls[0] = 8.0;
    strategy.head->w_cls[scenario.scene.feature_channels + 4] = 8.0;
    strategy.head->b_cls = -4.0;
    strategy.head->q.assign(scenario.scene.feature_channels, 0.1);
    return strategy;
}

}  // namespace

TEST_CASE("strategy names round trip") {
    for (const char* name : {"no-fusion", "late-fusion", "lif-base", "lif-full"})
        CHECK(to_string(parse_strategy(name)) == name);
    CHECK_THROWS_AS(parse_strategy("mid-fusion"), std::invalid_argument);
}

TEST_CASE("no-fusion transmits nothing") {
    const Scenario s = smoke_scenario();
    const FrameResult r = run_frame(s, 0, grid_strategy(StrategyKind::no_fusion, s), 0);
    CHECK(r.payload_bytes == 0);
    CHECK(r.preround_bytes == 0);
    CHECK(r.message_count == 0);
    CHECK(r.gts.size() == s.scene.box_count);
}

TEST_CASE("a closed demand gate degenerates to single-agent inference") {
    const Scenario s = smoke_scenario();
    Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    lif.policy.demand_threshold = 1.0;
    const FrameResult closed = run_frame(s, 1, lif, 1);
    const FrameResult solo =
        run_frame(s, 1, grid_strategy(StrategyKind::no_fusion, s), 1);

    // Only the score-map pre-round crosses the air; predictions coincide
    // with the zero-augmented single-agent grid path.
    CHECK(closed.payload_bytes == 0);
    CHECK(closed.preround_bytes ==
          4ull * s.scene.grid.cell_count() * (s.scene.agent_count - 1));
    CHECK(closed.message_count == s.scene.agent_count - 1);
    CHECK(closed.preds == solo.preds);
}

TEST_CASE("late fusion on a noiseless scenario recovers every box") {
    const Scenario s = noiseless_scenario();
    Strategy late;
    late.kind = StrategyKind::late_fusion;
    const SuiteResult suite = run_suite(s, late, 1);
    CHECK(suite.report.map == doctest::Approx(1.0));
    CHECK(suite.report.mate == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(suite.payload_bytes > 0);
    CHECK(suite.preround_bytes == 0);
}

TEST_CASE("late fusion byte accounting is exactly 32 bytes per shared box") {
    const Scenario s = noiseless_scenario();
    Strategy late;
    late.kind = StrategyKind::late_fusion;
    const FrameResult r = run_frame(s, 2, late, 2 % s.scene.agent_count);
    // Noiseless, full-circle visibility: every other agent shares its full
    // detection list, one 32-byte record per ground-truth box.
    const std::uint64_t expected =
        32ull * s.scene.box_count * (s.scene.agent_count - 1);
    CHECK(r.payload_bytes == expected);
    CHECK(r.shared_items == s.scene.box_count * (s.scene.agent_count - 1));
}

TEST_CASE("run_frame is deterministic across repeated calls") {
    const Scenario s = smoke_scenario();
    const Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    const FrameResult a = run_frame(s, 3, lif, 0);
    const FrameResult b = run_frame(s, 3, lif, 0);
    CHECK(a.preds == b.preds);
    CHECK(a.payload_bytes == b.payload_bytes);
    CHECK(a.ambiguous_items == b.ambiguous_items);
}

TEST_CASE("suite results are identical for any worker count") {
    const Scenario s = smoke_scenario();
    const Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    const SuiteResult serial = run_suite(s, lif, 1);
    const SuiteResult parallel = run_suite(s, lif, 8);
    CHECK(serial.frames.size() == parallel.frames.size());
    for (std::size_t i = 0; i < serial.frames.size(); ++i) {
        CHECK(serial.frames[i].preds == parallel.frames[i].preds);
        CHECK(serial.frames[i].gts == parallel.frames[i].gts);
    }
    CHECK(serial.payload_bytes == parallel.payload_bytes);

    const SweepSpec spec{{1.0, 0.5, 0.0}, {}};
    const auto points1 = sweep(s, lif, spec, 1);
    const auto points8 = sweep(s, lif, spec, 8);
    CHECK(sweep_csv(lif, points1, s.frames) == sweep_csv(lif, points8, s.frames));
}

TEST_CASE("sweep validates its axes and writes one row per point") {
    const Scenario s = smoke_scenario();
    const Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    CHECK_THROWS_AS(sweep(s, lif, SweepSpec{}, 1), std::invalid_argument);
    CHECK_THROWS_AS(sweep(s, lif, SweepSpec{{0.5}, {128}}, 1), std::invalid_argument);

    const auto points = sweep(s, lif, SweepSpec{{0.5}, {}}, 2);
    REQUIRE(points.size() == 1);
    const std::string csv = sweep_csv(lif, points, s.frames);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one row
    CHECK(csv.find("lif-full,uncertainty") != std::string::npos);

    const std::string svg = sweep_svg(lif, points);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("mAP") != std::string::npos);
}

TEST_CASE("opening the demand gate never hurts noiseless accuracy") {
    // Noise off but occlusion sectors kept, so sharing has something to add.
    Scenario s = smoke_scenario();
    for (DetectorProfile& p : s.detector_profiles) {
        p.miss_rate = 0.0;
        p.false_positive_rate_per_cell = 0.0;
        p.center_noise_sigma = 0.0;
        p.size_noise_sigma = 0.0;
        p.yaw_noise_sigma = 0.0;
        p.calibration.true_jitter = 0.0;
        p.calibration.false_jitter = 0.0;
    }
    const Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    const auto points = sweep(s, lif, SweepSpec{{1.0, 0.5, 0.0}, {}}, 2);
    REQUIRE(points.size() == 3);
    CHECK(points[1].report.map >= points[0].report.map - 1e-9);
    CHECK(points[2].report.map >= points[1].report.map - 1e-9);
    CHECK(points[2].total_payload_bytes > 0);
}

TEST_CASE("rising budgets never shrink the shared set") {
    Scenario s = smoke_scenario();
    s.frames = 3;
    Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    lif.policy.demand_threshold = 0.0;
    const auto points = sweep(s, lif, SweepSpec{{}, {64, 128, 256, 512, 4096}}, 1);
    for (std::size_t i = 1; i < points.size(); ++i) {
        CHECK(points[i].shared_items >= points[i - 1].shared_items);
        CHECK(points[i].total_payload_bytes >= points[i - 1].total_payload_bytes);
    }
}

TEST_CASE("reported bytes equal the recomputed per-message payload sum") {
    const Scenario s = smoke_scenario();
    Strategy lif = grid_strategy(StrategyKind::lif_full, s);
    lif.policy.demand_threshold = 0.2;
    const FrameResult r = run_frame(s, 0, lif, 0);

    // Independent accounting: 12 bytes per shared 2D point, 32 per box. The
    // pipeline reports exactly the serialized payload sum.
    CHECK(r.payload_bytes % 4 == 0);
    std::uint64_t lower = 12ull * static_cast<std::uint64_t>(r.shared_items);
    std::uint64_t upper = 32ull * static_cast<std::uint64_t>(r.shared_items);
    CHECK(r.payload_bytes >= lower);
    CHECK(r.payload_bytes <= upper);
}

TEST_CASE("train_pipeline fits the smoke scenario") {
    Scenario s = smoke_scenario();
    s.train_frames = 6;
    s.train.epochs = 60;
    const TrainResult result = train_pipeline(s, StrategyKind::lif_full);
    CHECK(result.loss_trace.back() < result.loss_trace.front());
    CHECK(result.params.feature_channels == s.scene.feature_channels);

    CHECK_THROWS_AS(train_pipeline(s, StrategyKind::late_fusion), std::invalid_argument);
}

TEST_CASE("grid strategies require head parameters") {
    const Scenario s = smoke_scenario();
    Strategy bare;
    bare.kind = StrategyKind::no_fusion;
    CHECK_THROWS_AS(run_frame(s, 0, bare, 0), std::invalid_argument);
}
