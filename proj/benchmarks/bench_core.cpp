// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include <benchmark/benchmark.h>

#include "cobev/comms.hpp"
#include "cobev/fusion.hpp"
#include "cobev/head.hpp"
#include "cobev/pipeline.hpp"
#include "cobev/rng.hpp"
#include "cobev/scene.hpp"

using namespace cobev;

namespace {

ScalarMap random_map(Rng& rng, int rows, int cols) {
    ScalarMap m = ScalarMap::make(rows, cols, 0.0);
    for (double& v : m.values) v = rng.uniform01();
    return m;
}

SceneConfig bench_scene_config() {
    SceneConfig cfg;
    cfg.grid = GridSpec::make_centered(51.2, 1.6);
    cfg.agent_count = 5;
    cfg.box_count = 22;
    cfg.spawn_half_extent = 38.0;
    cfg.feature_channels = 8;
    cfg.feature_noise_sigma = 0.05;
    return cfg;
}

void BM_UncertaintyMap(benchmark::State& state) {
    Rng rng(1);
    const ScalarMap s = random_map(rng, 256, 256);
    for (auto _ : state) benchmark::DoNotOptimize(uncertainty_map(s, 0.15));
}
BENCHMARK(BM_UncertaintyMap);

void BM_DemandMap(benchmark::State& state) {
    Rng rng(2);
    const ScalarMap a = random_map(rng, 256, 256);
    const ScalarMap b = random_map(rng, 256, 256);
    for (auto _ : state) benchmark::DoNotOptimize(demand_map(a, b));
}
BENCHMARK(BM_DemandMap);

void BM_Observe(benchmark::State& state) {
    const SceneConfig cfg = bench_scene_config();
    const Scene scene = generate_scene(cfg, 7);
    DetectorProfile profile;
    profile.miss_rate = 0.15;
    profile.false_positive_rate_per_cell = 5e-4;
    profile.center_noise_sigma = 0.3;
    for (auto _ : state) benchmark::DoNotOptimize(observe(scene, 0, profile));
}
BENCHMARK(BM_Observe);

void BM_BuildBoBev(benchmark::State& state) {
    Rng rng(3);
    const GridSpec spec = GridSpec::make_centered(51.2, 1.6);
    std::vector<Box3D> boxes;
    for (int i = 0; i < 64; ++i)
        boxes.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50), 1.5,
                         rng.uniform(1, 3), rng.uniform(1, 2), rng.uniform(3, 5),
                         rng.uniform(-3, 3), rng.uniform01()});
    for (auto _ : state) benchmark::DoNotOptimize(build_bobev(boxes, spec));
}
BENCHMARK(BM_BuildBoBev);

void BM_HeadForward(benchmark::State& state) {
    Rng rng(4);
    const GridSpec spec = GridSpec::make_centered(51.2, 1.6);
    const int channels = 8;
    BevGrid fused = BevGrid::make(spec, channels + kBoxChannelCount, 0.0);
    for (double& v : fused.values) v = rng.uniform(-1, 1);
    HeadParams params = HeadParams::zeros(channels);
    auto flat = flatten(params);
    for (double& v : flat) v = rng.uniform(-0.5, 0.5);
    params = unflatten(flat, channels);
    for (auto _ : state) benchmark::DoNotOptimize(head_forward(fused, params));
}
BENCHMARK(BM_HeadForward);

void BM_RunFrame(benchmark::State& state) {
    Scenario scenario;
    scenario.seed = 11;
    scenario.frames = 1;
    scenario.scene = bench_scene_config();
    scenario.detector_profiles.assign(scenario.scene.agent_count, DetectorProfile{});
    for (auto& p : scenario.detector_profiles) {
        p.miss_rate = 0.15;
        p.false_positive_rate_per_cell = 5e-4;
        p.center_noise_sigma = 0.3;
    }
    Strategy strategy;
    strategy.kind = StrategyKind::lif_full;
    strategy.head = HeadParams::zeros(scenario.scene.feature_channels);
    strategy.head->w_cls[0] = 8.0;
    strategy.head->b_cls = -4.0;
    strategy.head->q.assign(scenario.scene.feature_channels, 0.1);
    std::uint64_t frame = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(run_frame(scenario, frame++ % 16, strategy, 0));
}
BENCHMARK(BM_RunFrame);

void BM_EncodeDecode(benchmark::State& state) {
    Rng rng(5);
    DetectionMessage msg;
    msg.sender_pose = {1, 2, 55};
    for (int i = 0; i < 32; ++i)
        msg.dets_2d.push_back({static_cast<float>(rng.uniform(-50, 50)),
                               static_cast<float>(rng.uniform(-50, 50)),
                               static_cast<float>(rng.uniform01())});
    for (int i = 0; i < 24; ++i)
        msg.dets_3d.push_back(WireBox3D::from_box(
            {rng.uniform(-50, 50), rng.uniform(-50, 50), 1.5, 2, 1.5, 4.5, 0.3,
             rng.uniform01()}));
    for (auto _ : state) {
        const auto bytes = encode_message(msg);
        benchmark::DoNotOptimize(decode_message(bytes));
    }
}
BENCHMARK(BM_EncodeDecode);

}  // namespace

BENCHMARK_MAIN();
