// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cobev/comms.hpp"
#include "cobev/head.hpp"
#include "cobev/metrics.hpp"
#include "cobev/scenario.hpp"

namespace cobev {

/// Collaboration strategies:
/// * no_fusion   — single-agent grid inference, zero-augmented channels.
/// * late_fusion — union of all agents' 3D detections, deduplicated; no grid.
/// * lif_base    — received 3D boxes rasterized into the box channels only.
/// * lif_full    — box channels plus the positional embedding from received
///                 2D projections.
enum class StrategyKind { no_fusion, late_fusion, lif_base, lif_full };

StrategyKind parse_strategy(const std::string& name);
std::string to_string(StrategyKind kind);
std::string to_string(PolicyKind kind);

struct Strategy {
    StrategyKind kind = StrategyKind::lif_full;
    CommPolicy policy;
    std::optional<HeadParams> head;  // required for the grid strategies
};

/// Ego frame of an agent: the world translated to its ground projection.
/// Altitude never shifts the horizontal BEV lattice.
inline Vec3 ego_origin(const Vec3& uav_position) {
    return Vec3{uav_position.x, uav_position.y, 0.0};
}

struct FrameResult {
    std::vector<Box3D> preds;          // ego frame
    std::vector<GroundTruthBox> gts;   // ego frame
    std::uint64_t payload_bytes = 0;   // detection payload across all messages
    std::uint64_t preround_bytes = 0;  // score-map exchange, accounted separately
    int message_count = 0;
    int shared_items = 0;      // detections admitted across all messages
    int ambiguous_items = 0;   // items whose sender-frame cell score is within
                               // +/-0.1 of the detection threshold
};

/// Runs one frame end to end: synthesize, observe every agent, communicate
/// under the strategy's policy, fuse, decode, and return predictions plus the
/// exact byte accounting. Deterministic in (scenario, frame_index, strategy).
FrameResult run_frame(const Scenario& scenario, std::uint64_t frame_index,
                      const Strategy& strategy, int ego_index);

struct SuiteResult {
    std::vector<FrameDetections> frames;
    EvalReport report;
    std::uint64_t payload_bytes = 0;
    std::uint64_t preround_bytes = 0;
    std::uint64_t message_count = 0;
    std::uint64_t shared_items = 0;
    std::uint64_t ambiguous_items = 0;
};

/// Runs the scenario's frame suite with the ego role rotating across agents
/// (frame i uses agent i mod N). Frames are independent work units; results
/// are bitwise identical for any worker count.
SuiteResult run_suite(const Scenario& scenario, const Strategy& strategy, int threads);

struct SweepPoint {
    double demand_threshold = 0.0;
    std::optional<std::uint64_t> budget_bytes;
    double mean_payload_bytes = 0.0;
    double mean_preround_bytes = 0.0;
    std::uint64_t total_payload_bytes = 0;
    std::uint64_t shared_items = 0;
    std::uint64_t ambiguous_items = 0;
    EvalReport report;
};

/// Exactly one of the two axes must be non-empty.
struct SweepSpec {
    std::vector<double> demand_thresholds;
    std::vector<std::uint64_t> budgets;
};

std::vector<SweepPoint> sweep(const Scenario& scenario, const Strategy& base,
                              const SweepSpec& spec, int threads);

/// Canonical sweep artifact. Columns are documented in the README; the byte
/// stream is deterministic for a given scenario/strategy/sweep.
std::string sweep_csv(const Strategy& strategy, const std::vector<SweepPoint>& points,
                      int frames);

std::string sweep_svg(const Strategy& strategy, const std::vector<SweepPoint>& points);

/// Builds the training set for a grid strategy (training frames use an
/// independent seed stream) and fits the decoder by full-batch gradient
/// descent. late_fusion has no trainable decoder and is rejected.
TrainResult train_pipeline(const Scenario& scenario, StrategyKind kind);

/// Seed helpers shared by evaluation and training frame generation.
std::uint64_t eval_frame_seed(std::uint64_t scenario_seed, std::uint64_t frame_index);
std::uint64_t train_frame_seed(std::uint64_t scenario_seed, std::uint64_t frame_index);

}  // namespace cobev
