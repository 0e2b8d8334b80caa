// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "cobev/svg.hpp"

namespace cobev {

namespace {

constexpr std::uint64_t kTrainSalt = 0x747261696e5f3031ull;
constexpr std::uint64_t kEvalSalt = 0x6576616c5f303131ull;

struct FrameContext {
    Scene scene;
    std::vector<AgentObservation> observations;
};

FrameContext make_frame(const Scenario& scenario, std::uint64_t scene_seed) {
    FrameContext ctx;
    ctx.scene = generate_scene(scenario.scene, scene_seed);
    ctx.observations.reserve(ctx.scene.agents.size());
    for (std::size_t a = 0; a < ctx.scene.agents.size(); ++a)
        ctx.observations.push_back(
            observe(ctx.scene, static_cast<int>(a), scenario.detector_profiles[a]));
    return ctx;
}

std::vector<GroundTruthBox> gts_in_ego(const Scene& scene, const Vec3& origin) {
    std::vector<GroundTruthBox> out = scene.boxes;
    for (GroundTruthBox& b : out) {
        b.x -= origin.x;
        b.y -= origin.y;
    }
    return out;
}

// Sender-frame cell score of a transmitted item; counts the "ambiguous"
// items whose score sits within +/-0.1 of the detection threshold.
void count_ambiguity(const DetectionMessage& msg, const AgentObservation& sender,
                     const GridSpec& grid, double detection_threshold,
                     FrameResult& result) {
    const Vec3 origin = ego_origin(sender.pose);
    const auto tally = [&](double world_x, double world_y) {
        ++result.shared_items;
        const auto cell = ego_to_bev({world_x - origin.x, world_y - origin.y, 0.0}, grid);
        if (!cell) return;
        const double s = sender.score_map.at(cell->row, cell->col);
        if (std::abs(s - detection_threshold) <= 0.1) ++result.ambiguous_items;
    };
    for (const Projected2D& d : msg.dets_2d) tally(d.x, d.y);
    for (const WireBox3D& d : msg.dets_3d) tally(d.x, d.y);
}

// Sends one message through the wire encoding and back. Fusion consumes what
// was actually transmitted (float32 payload), never the sender's doubles.
DetectionMessage transmit(const DetectionMessage& msg, FrameResult& result) {
    const std::vector<std::uint8_t> bytes = encode_message(msg);
    result.payload_bytes += bytes.size() - kMessageHeaderBytes;
    ++result.message_count;
    return decode_message(bytes);
}

struct ReceivedData {
    std::vector<VpePoint> vpe_points;
    std::vector<Box3D> boxes;  // ego frame
};

ReceivedData collect_received(const std::vector<DetectionMessage>& messages,
                              const Vec3& ego_org, const GridSpec& grid) {
    ReceivedData rx;
    for (const DetectionMessage& msg : messages) {
        for (const Projected2D& d : msg.dets_2d) {
            const RawCell cell = bev_cell_raw(d.x - ego_org.x, d.y - ego_org.y, grid);
            const auto saturate = [](std::int64_t v) {
                return static_cast<int>(std::clamp<std::int64_t>(v, -1, 1 << 30));
            };
            rx.vpe_points.push_back(
                VpePoint{saturate(cell.row), saturate(cell.col), d.s});
        }
        for (const WireBox3D& d : msg.dets_3d) {
            Box3D box = d.to_box();
            box.x -= ego_org.x;
            box.y -= ego_org.y;
            rx.boxes.push_back(box);
        }
    }
    return rx;
}

std::vector<Box3D> grid_inference(const Scenario& scenario, const Strategy& strategy,
                                  const BevGrid& features,
                                  const std::vector<VpePoint>& vpe_points,
                                  const std::vector<Box3D>& received_boxes) {
    if (!strategy.head)
        throw std::invalid_argument("run_frame: strategy '" + to_string(strategy.kind) +
                                    "' requires trained head parameters");
    const HeadParams& head = *strategy.head;
    if (head.feature_channels != features.channels)
        throw std::invalid_argument("run_frame: head parameters expect " +
                                    std::to_string(head.feature_channels) +
                                    " feature channels");
    const GridSpec& grid = features.spec;

    const std::vector<Box3D> deduped = dedupe_received(received_boxes, scenario.dedupe_radius);
    const BevGrid box_grid = build_bobev(deduped, grid);

    BevGrid refined = features;
    if (strategy.kind == StrategyKind::lif_full && !vpe_points.empty()) {
        const BevGrid vpe = build_vpe(vpe_points, VpeParams{head.q}, grid);
        refined = refine_features(features, vpe);
    }
    const BevGrid fused = fuse(refined, box_grid);
    const HeadOutput out = head_forward(fused, head);
    return decode(out.heatmap, out.reg, grid, scenario.decode_peak_threshold,
                  scenario.scene.object_plane_height);
}

}  // namespace

StrategyKind parse_strategy(const std::string& name) {
    if (name == "no-fusion") return StrategyKind::no_fusion;
    if (name == "late-fusion") return StrategyKind::late_fusion;
    if (name == "lif-base") return StrategyKind::lif_base;
    if (name == "lif-full") return StrategyKind::lif_full;
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::no_fusion: return "no-fusion";
        case StrategyKind::late_fusion: return "late-fusion";
        case StrategyKind::lif_base: return "lif-base";
        case StrategyKind::lif_full: return "lif-full";
    }
    return "unknown";
}

std::string to_string(PolicyKind kind) {
    return kind == PolicyKind::uncertainty ? "uncertainty" : "objectness";
}

std::uint64_t eval_frame_seed(std::uint64_t scenario_seed, std::uint64_t frame_index) {
    return mix64(mix64(scenario_seed ^ kEvalSalt) ^ frame_index);
}

std::uint64_t train_frame_seed(std::uint64_t scenario_seed, std::uint64_t frame_index) {
    return mix64(mix64(scenario_seed ^ kTrainSalt) ^ frame_index);
}

FrameResult run_frame(const Scenario& scenario, std::uint64_t frame_index,
                      const Strategy& strategy, int ego_index) {
    scenario.validate();
    if (ego_index < 0 || ego_index >= scenario.scene.agent_count)
        throw std::invalid_argument("run_frame: ego index out of range");

    const FrameContext ctx = make_frame(scenario, eval_frame_seed(scenario.seed, frame_index));
    const AgentObservation& ego = ctx.observations[ego_index];
    const Vec3 ego_org = ego_origin(ego.pose);
    const GridSpec& grid = scenario.scene.grid;

    FrameResult result;
    result.gts = gts_in_ego(ctx.scene, ego_org);

    switch (strategy.kind) {
        case StrategyKind::no_fusion: {
            result.preds = grid_inference(scenario, strategy, ego.features, {}, {});
            return result;
        }
        case StrategyKind::late_fusion: {
            // Every agent shares its full 3D detection list; the ego merges
            // them with its own and suppresses duplicates.
            std::vector<Box3D> pool;
            for (const AgentObservation& obs : ctx.observations) {
                if (obs.agent_id == ego.agent_id) {
                    for (Box3D det : obs.dets_3d) {
                        det.x += obs.pose.x - ego_org.x;
                        det.y += obs.pose.y - ego_org.y;
                        pool.push_back(det);
                    }
                    continue;
                }
                DetectionMessage msg;
                msg.sender_id = static_cast<std::uint32_t>(obs.agent_id);
                msg.receiver_id = static_cast<std::uint32_t>(ego.agent_id);
                msg.timestamp = frame_index;
                msg.sender_pose = obs.pose;
                const Vec3 sender_org = ego_origin(obs.pose);
                for (const Box3D& det : obs.dets_3d) {
                    Box3D world = det;
                    world.x += sender_org.x;
                    world.y += sender_org.y;
                    msg.dets_3d.push_back(WireBox3D::from_box(world));
                }
                const DetectionMessage received = transmit(msg, result);
                count_ambiguity(received, obs, grid, scenario.detection_threshold, result);
                for (const WireBox3D& d : received.dets_3d) {
                    Box3D box = d.to_box();
                    box.x -= ego_org.x;
                    box.y -= ego_org.y;
                    pool.push_back(box);
                }
            }
            result.preds = dedupe_received(pool, scenario.dedupe_radius);
            return result;
        }
        case StrategyKind::lif_base:
        case StrategyKind::lif_full:
            break;
    }

    // Score-map pre-round: the ego's map reaches every sender, float32 per
    // cell. Counted apart from the detection payload.
    const std::uint64_t map_bytes =
        4ull * static_cast<std::uint64_t>(grid.cell_count());
    result.preround_bytes =
        map_bytes * static_cast<std::uint64_t>(scenario.scene.agent_count - 1);

    const ScalarMap ego_uncertainty =
        uncertainty_map(ego.score_map, scenario.detection_threshold);

    std::vector<DetectionMessage> received;
    for (const AgentObservation& obs : ctx.observations) {
        if (obs.agent_id == ego.agent_id) continue;

        DetectionMessage msg;
        if (strategy.policy.kind == PolicyKind::uncertainty) {
            const AlignedMap sender_score = align_to_frame(
                obs.score_map, grid, ego_origin(obs.pose), ego_org, 0.0);
            const ScalarMap sender_uncertainty =
                uncertainty_map(sender_score.values, scenario.detection_threshold);
            const ScalarMap demand = demand_map(ego_uncertainty, sender_uncertainty);
            DemandContext dctx;
            dctx.grid = &grid;
            dctx.ego_pose = ego_org;
            dctx.demand = &demand;
            dctx.ego_uncertainty = &ego_uncertainty;
            dctx.sender_score = &sender_score.values;
            dctx.sender_coverage = &sender_score.coverage;
            dctx.object_plane_height = scenario.scene.object_plane_height;
            dctx.timestamp = frame_index;
            dctx.receiver_id = static_cast<std::uint32_t>(ego.agent_id);
            msg = select_shared(obs, dctx, strategy.policy);
        } else {
            msg = objectness_select(obs, obs.score_map, grid, strategy.policy,
                                    scenario.scene.object_plane_height, frame_index,
                                    static_cast<std::uint32_t>(ego.agent_id));
        }
        const DetectionMessage wire = transmit(msg, result);
        count_ambiguity(wire, obs, grid, scenario.detection_threshold, result);
        received.push_back(wire);
    }

    const ReceivedData rx = collect_received(received, ego_org, grid);
    result.preds = grid_inference(scenario, strategy, ego.features, rx.vpe_points, rx.boxes);
    return result;
}

SuiteResult run_suite(const Scenario& scenario, const Strategy& strategy, int threads) {
    scenario.validate();
    if (threads < 1) throw std::invalid_argument("run_suite: thread count must be >= 1");

    const int frames = scenario.frames;
    std::vector<FrameResult> results(frames);
    std::atomic<int> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto worker = [&]() {
        while (true) {
            const int i = cursor.fetch_add(1);
            if (i >= frames) return;
            try {
                const int ego = i % scenario.scene.agent_count;
                results[i] = run_frame(scenario, static_cast<std::uint64_t>(i), strategy, ego);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::make_exception_ptr(std::runtime_error(
                        "frame " + std::to_string(i) + ": " + e.what()));
                return;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int workers = std::min(threads, frames);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    SuiteResult suite;
    suite.frames.reserve(frames);
    for (const FrameResult& r : results) {
        suite.frames.push_back(FrameDetections{r.preds, r.gts});
        suite.payload_bytes += r.payload_bytes;
        suite.preround_bytes += r.preround_bytes;
        suite.message_count += static_cast<std::uint64_t>(r.message_count);
        suite.shared_items += static_cast<std::uint64_t>(r.shared_items);
        suite.ambiguous_items += static_cast<std::uint64_t>(r.ambiguous_items);
    }
    suite.report = evaluate(suite.frames);
    return suite;
}

std::vector<SweepPoint> sweep(const Scenario& scenario, const Strategy& base,
                              const SweepSpec& spec, int threads) {
    const bool by_threshold = !spec.demand_thresholds.empty();
    const bool by_budget = !spec.budgets.empty();
    if (by_threshold == by_budget)
        throw std::invalid_argument(
            "sweep: exactly one of demand_thresholds / budgets must be non-empty");

    const std::size_t count =
        by_threshold ? spec.demand_thresholds.size() : spec.budgets.size();
    std::vector<SweepPoint> points;
    points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Strategy strategy = base;
        if (by_threshold)
            strategy.policy.demand_threshold = spec.demand_thresholds[i];
        else
            strategy.policy.budget_bytes = spec.budgets[i];

        const SuiteResult suite = run_suite(scenario, strategy, threads);
        SweepPoint point;
        point.demand_threshold = strategy.policy.demand_threshold;
        point.budget_bytes = strategy.policy.budget_bytes;
        point.total_payload_bytes = suite.payload_bytes;
        point.mean_payload_bytes =
            static_cast<double>(suite.payload_bytes) / scenario.frames;
        point.mean_preround_bytes =
            static_cast<double>(suite.preround_bytes) / scenario.frames;
        point.shared_items = suite.shared_items;
        point.ambiguous_items = suite.ambiguous_items;
        point.report = suite.report;
        points.push_back(point);
    }
    return points;
}

std::string sweep_csv(const Strategy& strategy, const std::vector<SweepPoint>& points,
                      int frames) {
    std::string out =
        "strategy,policy,background_priority,phi_dem,budget_bytes,frames,"
        "mean_payload_bytes,mean_preround_bytes,mAP,NDS,mATE,mASE,mAOE,"
        "ap_0.5m,ap_1.0m,ap_2.0m,ap_4.0m,gt_count,pred_count,tp_count,"
        "shared_items,ambiguous_items\n";
    char buf[640];
    for (const SweepPoint& p : points) {
        std::string budget = p.budget_bytes ? std::to_string(*p.budget_bytes) : "";
        std::snprintf(
            buf, sizeof(buf),
            "%s,%s,%d,%.4f,%s,%d,%.3f,%.3f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,"
            "%.6f,%d,%d,%d,%llu,%llu\n",
            to_string(strategy.kind).c_str(), to_string(strategy.policy.kind).c_str(),
            strategy.policy.background_priority ? 1 : 0, p.demand_threshold,
            budget.c_str(), frames, p.mean_payload_bytes, p.mean_preround_bytes,
            p.report.map, p.report.nds, p.report.mate, p.report.mase, p.report.maoe,
            p.report.ap_per_threshold[0], p.report.ap_per_threshold[1],
            p.report.ap_per_threshold[2], p.report.ap_per_threshold[3],
            p.report.gt_count, p.report.pred_count, p.report.tp_count,
            static_cast<unsigned long long>(p.shared_items),
            static_cast<unsigned long long>(p.ambiguous_items));
        out += buf;
    }
    return out;
}

std::string sweep_svg(const Strategy& strategy, const std::vector<SweepPoint>& points) {
    SvgSeries series;
    series.label = to_string(strategy.kind) + " / " + to_string(strategy.policy.kind);
    for (const SweepPoint& p : points) {
        // Zero-byte points plot at x = 0: no transmission, not -inf.
        const double x =
            p.mean_payload_bytes > 0.0 ? std::log2(p.mean_payload_bytes) : 0.0;
        series.points.push_back({x, p.report.map});
    }
    std::sort(series.points.begin(), series.points.end(),
              [](const auto& a, const auto& b) { return a[0] < b[0]; });
    return render_line_chart("accuracy vs bandwidth", "log2(mean payload bytes / frame)",
                             "mAP", {series});
}

TrainResult train_pipeline(const Scenario& scenario, StrategyKind kind) {
    scenario.validate();
    if (kind == StrategyKind::late_fusion)
        throw std::invalid_argument("train_pipeline: late-fusion has no trainable head");

    // Training shares under a generous gate so the decoder sees collaborative
    // evidence; sweeps may later close the channel at inference time.
    CommPolicy policy;
    policy.kind = PolicyKind::uncertainty;
    policy.detection_threshold = scenario.detection_threshold;
    policy.demand_threshold = scenario.train_demand_threshold;

    std::vector<TrainSample> samples;
    samples.reserve(scenario.train_frames);
    for (int i = 0; i < scenario.train_frames; ++i) {
        const FrameContext ctx =
            make_frame(scenario, train_frame_seed(scenario.seed, i));
        const int ego_index = i % scenario.scene.agent_count;
        const AgentObservation& ego = ctx.observations[ego_index];
        const Vec3 ego_org = ego_origin(ego.pose);
        const GridSpec& grid = scenario.scene.grid;

        std::vector<VpePoint> vpe_points;
        std::vector<Box3D> rx_boxes;
        if (kind != StrategyKind::no_fusion) {
            const ScalarMap ego_uncertainty =
                uncertainty_map(ego.score_map, scenario.detection_threshold);
            std::vector<DetectionMessage> messages;
            for (const AgentObservation& obs : ctx.observations) {
                if (obs.agent_id == ego.agent_id) continue;
                const AlignedMap sender_score = align_to_frame(
                    obs.score_map, grid, ego_origin(obs.pose), ego_org, 0.0);
                const ScalarMap sender_uncertainty =
                    uncertainty_map(sender_score.values, scenario.detection_threshold);
                const ScalarMap demand = demand_map(ego_uncertainty, sender_uncertainty);
                DemandContext dctx;
                dctx.grid = &grid;
                dctx.ego_pose = ego_org;
                dctx.demand = &demand;
                dctx.ego_uncertainty = &ego_uncertainty;
                dctx.sender_score = &sender_score.values;
                dctx.sender_coverage = &sender_score.coverage;
                dctx.object_plane_height = scenario.scene.object_plane_height;
                dctx.timestamp = static_cast<std::uint64_t>(i);
                dctx.receiver_id = static_cast<std::uint32_t>(ego.agent_id);
                const DetectionMessage msg = select_shared(obs, dctx, policy);
                messages.push_back(decode_message(encode_message(msg)));
            }
            ReceivedData rx = collect_received(messages, ego_org, grid);
            rx.boxes = dedupe_received(rx.boxes, scenario.dedupe_radius);
            if (kind == StrategyKind::lif_full) vpe_points = std::move(rx.vpe_points);
            rx_boxes = std::move(rx.boxes);
        }

        const BevGrid box_grid = build_bobev(rx_boxes, grid);
        samples.push_back(make_train_sample(ego.features, std::move(vpe_points), box_grid,
                                            gts_in_ego(ctx.scene, ego_org),
                                            scenario.scene.score_splat_factor));
    }
    return train(samples, scenario.train, scenario.scene.feature_channels);
}

}  // namespace cobev
