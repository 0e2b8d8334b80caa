// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/comms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace cobev {

namespace {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void require(std::size_t n) const {
        if (pos + n > bytes.size())
            throw std::runtime_error("decode_message: truncated message");
    }
    std::uint8_t u8() {
        require(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        require(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos]) |
                          static_cast<std::uint16_t>(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        require(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
};

std::uint16_t checked_count(std::size_t n, const char* what) {
    if (n > 0xffff)
        throw std::length_error(std::string("encode_message: too many ") + what);
    return static_cast<std::uint16_t>(n);
}

}  // namespace

void CommPolicy::validate() const {
    const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(detection_threshold) || !in01(demand_threshold))
        throw std::invalid_argument("CommPolicy: thresholds must be in [0,1]");
    if (bg_max_sender_score && !in01(*bg_max_sender_score))
        throw std::invalid_argument("CommPolicy: bg_max_sender_score must be in [0,1]");
    if (!in01(bg_min_ego_uncertainty))
        throw std::invalid_argument("CommPolicy: bg_min_ego_uncertainty must be in [0,1]");
}

double CommPolicy::background_score_cap() const {
    return bg_max_sender_score ? *bg_max_sender_score : detection_threshold / 4.0;
}

WireBox3D WireBox3D::from_box(const Box3D& b) {
    return WireBox3D{static_cast<float>(b.x),   static_cast<float>(b.y),
                     static_cast<float>(b.z),   static_cast<float>(b.w),
                     static_cast<float>(b.h),   static_cast<float>(b.l),
                     static_cast<float>(b.yaw), static_cast<float>(b.s)};
}

Box3D WireBox3D::to_box() const {
    return Box3D{x, y, z, w, h, l, yaw, s};
}

ScalarMap uncertainty_map(const ScalarMap& scores, double detection_threshold) {
    ScalarMap out = scores;
    for (double& v : out.values) v = 1.0 - std::abs(v - detection_threshold);
    return out;
}

ScalarMap demand_map(const ScalarMap& ego_uncertainty, const ScalarMap& sender_uncertainty) {
    if (ego_uncertainty.rows != sender_uncertainty.rows ||
        ego_uncertainty.cols != sender_uncertainty.cols)
        throw std::invalid_argument("demand_map: dimension mismatch");
    ScalarMap out = ego_uncertainty;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] *= 1.0 - sender_uncertainty.values[i];
    return out;
}

std::size_t payload_bytes(const DetectionMessage& msg) {
    return kBytesPer2D * msg.dets_2d.size() + kBytesPer3D * msg.dets_3d.size() +
           kBytesPerBackground * msg.background.size();
}

std::optional<double> comm_volume_log2(const DetectionMessage& msg) {
    const std::size_t detection_bytes =
        kBytesPer2D * msg.dets_2d.size() + kBytesPer3D * msg.dets_3d.size();
    if (detection_bytes == 0) return std::nullopt;
    return std::log2(static_cast<double>(detection_bytes));
}

std::vector<std::uint8_t> encode_message(const DetectionMessage& msg) {
    std::vector<std::uint8_t> out;
    out.reserve(kMessageHeaderBytes + payload_bytes(msg));

    put_u8(out, kWireFormatVersion);
    put_u32(out, msg.sender_id);
    put_u32(out, msg.receiver_id);
    put_u64(out, msg.timestamp);
    put_f64(out, msg.sender_pose.x);
    put_f64(out, msg.sender_pose.y);
    put_f64(out, msg.sender_pose.z);
    put_u16(out, checked_count(msg.dets_2d.size(), "2D detections"));
    put_u16(out, checked_count(msg.dets_3d.size(), "3D detections"));
    put_u16(out, checked_count(msg.background.size(), "background assertions"));

    for (const Projected2D& d : msg.dets_2d) {
        put_f32(out, d.x);
        put_f32(out, d.y);
        put_f32(out, d.s);
    }
    for (const WireBox3D& d : msg.dets_3d) {
        put_f32(out, d.x);
        put_f32(out, d.y);
        put_f32(out, d.z);
        put_f32(out, d.w);
        put_f32(out, d.h);
        put_f32(out, d.l);
        put_f32(out, d.yaw);
        put_f32(out, d.s);
    }
    for (const BackgroundAssertion& b : msg.background) {
        put_f32(out, b.x);
        put_f32(out, b.y);
        put_f32(out, b.certainty);
    }
    return out;
}

DetectionMessage decode_message(std::span<const std::uint8_t> bytes) {
    Reader in{bytes};
    const std::uint8_t version = in.u8();
    if (version != kWireFormatVersion)
        throw std::runtime_error("decode_message: unsupported wire format version " +
                                 std::to_string(version));

    DetectionMessage msg;
    msg.sender_id = in.u32();
    msg.receiver_id = in.u32();
    msg.timestamp = in.u64();
    msg.sender_pose.x = in.f64();
    msg.sender_pose.y = in.f64();
    msg.sender_pose.z = in.f64();
    const std::uint16_t n2d = in.u16();
    const std::uint16_t n3d = in.u16();
    const std::uint16_t nbg = in.u16();

    msg.dets_2d.reserve(n2d);
    for (int i = 0; i < n2d; ++i) {
        Projected2D d;
        d.x = in.f32();
        d.y = in.f32();
        d.s = in.f32();
        msg.dets_2d.push_back(d);
    }
    msg.dets_3d.reserve(n3d);
    for (int i = 0; i < n3d; ++i) {
        WireBox3D d;
        d.x = in.f32();
        d.y = in.f32();
        d.z = in.f32();
        d.w = in.f32();
        d.h = in.f32();
        d.l = in.f32();
        d.yaw = in.f32();
        d.s = in.f32();
        msg.dets_3d.push_back(d);
    }
    msg.background.reserve(nbg);
    for (int i = 0; i < nbg; ++i) {
        BackgroundAssertion b;
        b.x = in.f32();
        b.y = in.f32();
        b.certainty = in.f32();
        msg.background.push_back(b);
    }
    if (in.pos != bytes.size())
        throw std::runtime_error("decode_message: trailing bytes after payload");
    return msg;
}

std::vector<Projected2D> project_2d_detections(const AgentObservation& obs,
                                               double object_plane_height) {
    std::vector<Projected2D> out;
    for (std::size_t cam = 0; cam < obs.dets_2d.size(); ++cam) {
        const CameraRig& rig = obs.rigs[cam];
        for (const Box2D& det : obs.dets_2d[cam]) {
            const Ray ray = pixel_ray(rig, det.x, det.y);
            const auto hit = ray_ground_intersect(ray, object_plane_height);
            if (!hit) continue;
            out.push_back(Projected2D{static_cast<float>(hit->x),
                                      static_cast<float>(hit->y),
                                      static_cast<float>(det.s)});
        }
    }
    return out;
}

namespace {

// One shareable item: either a projected 2D point or a 3D box.
struct Candidate {
    double rank = 0.0;          // demand or objectness score at the item's cell
    std::int64_t cell_index = 0;  // row-major, for deterministic tie-breaks
    int section = 0;            // 0: 2D, 1: 3D
    int source_index = 0;
    std::size_t bytes = 0;
    Projected2D det2d;
    WireBox3D det3d;
};

bool candidate_order(const Candidate& a, const Candidate& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    if (a.cell_index != b.cell_index) return a.cell_index < b.cell_index;
    if (a.section != b.section) return a.section < b.section;
    return a.source_index < b.source_index;
}

// Admits ranked candidates front-to-back, stopping at the first item that
// does not fit; admitted sets grow monotonically with the budget.
void admit(std::vector<Candidate>& candidates, const std::optional<std::uint64_t>& budget,
           std::uint64_t& used, DetectionMessage& msg) {
    std::sort(candidates.begin(), candidates.end(), candidate_order);
    for (const Candidate& cand : candidates) {
        if (budget && used + cand.bytes > *budget) break;
        used += cand.bytes;
        if (cand.section == 0)
            msg.dets_2d.push_back(cand.det2d);
        else
            msg.dets_3d.push_back(cand.det3d);
    }
}

std::optional<std::int64_t> cell_flat_index(double x, double y, const GridSpec& grid) {
    const RawCell raw = bev_cell_raw(x, y, grid);
    if (raw.row < 0 || raw.row >= grid.rows || raw.col < 0 || raw.col >= grid.cols)
        return std::nullopt;
    return raw.row * grid.cols + raw.col;
}

}  // namespace

DetectionMessage select_shared(const AgentObservation& sender, const DemandContext& ctx,
                               const CommPolicy& policy) {
    policy.validate();
    if (!ctx.grid || !ctx.demand || !ctx.ego_uncertainty || !ctx.sender_score ||
        !ctx.sender_coverage)
        throw std::invalid_argument("select_shared: incomplete demand context");
    const GridSpec& grid = *ctx.grid;
    if (ctx.demand->rows != grid.rows || ctx.demand->cols != grid.cols)
        throw std::invalid_argument("select_shared: demand map does not match grid");

    DetectionMessage msg;
    msg.sender_id = static_cast<std::uint32_t>(sender.agent_id);
    msg.receiver_id = ctx.receiver_id;
    msg.timestamp = ctx.timestamp;
    msg.sender_pose = sender.pose;

    std::vector<Candidate> candidates;

    const auto consider = [&](double world_x, double world_y, int section,
                              int source_index, const Projected2D& d2,
                              const WireBox3D& d3) {
        const auto idx =
            cell_flat_index(world_x - ctx.ego_pose.x, world_y - ctx.ego_pose.y, grid);
        if (!idx) return;  // outside the ego grid: not rasterizable, never sent
        const double demand = ctx.demand->values[static_cast<std::size_t>(*idx)];
        if (!(demand > policy.demand_threshold)) return;
        Candidate cand;
        cand.rank = demand;
        cand.cell_index = *idx;
        cand.section = section;
        cand.source_index = source_index;
        cand.bytes = section == 0 ? kBytesPer2D : kBytesPer3D;
        cand.det2d = d2;
        cand.det3d = d3;
        candidates.push_back(cand);
    };

    const std::vector<Projected2D> projected =
        project_2d_detections(sender, ctx.object_plane_height);
    for (std::size_t i = 0; i < projected.size(); ++i)
        consider(projected[i].x, projected[i].y, 0, static_cast<int>(i), projected[i], {});

    for (std::size_t i = 0; i < sender.dets_3d.size(); ++i) {
        Box3D world = sender.dets_3d[i];
        world.x += sender.pose.x;
        world.y += sender.pose.y;
        consider(world.x, world.y, 1, static_cast<int>(i), {}, WireBox3D::from_box(world));
    }

    std::uint64_t used = 0;
    admit(candidates, policy.budget_bytes, used, msg);

    // Certain-background tier: only meaningful under a byte budget.
    if (policy.background_priority && policy.budget_bytes) {
        struct BgCandidate {
            double rank;
            std::int64_t cell_index;
            BackgroundAssertion assertion;
        };
        std::vector<BgCandidate> bg;
        const double score_cap = policy.background_score_cap();
        for (int r = 0; r < grid.rows; ++r) {
            for (int c = 0; c < grid.cols; ++c) {
                const std::int64_t idx = static_cast<std::int64_t>(r) * grid.cols + c;
                const std::size_t u = static_cast<std::size_t>(idx);
                if (ctx.sender_coverage->values[u] == 0.0) continue;
                const double sender_s = ctx.sender_score->values[u];
                if (!(sender_s < policy.detection_threshold) || sender_s > score_cap)
                    continue;
                if (ctx.ego_uncertainty->values[u] < policy.bg_min_ego_uncertainty)
                    continue;
                BgCandidate cand;
                cand.rank = ctx.demand->values[u];
                cand.cell_index = idx;
                cand.assertion = BackgroundAssertion{
                    static_cast<float>(grid.cell_center_x(c) + ctx.ego_pose.x),
                    static_cast<float>(grid.cell_center_y(r) + ctx.ego_pose.y),
                    static_cast<float>(std::clamp(1.0 - sender_s, 0.0, 1.0))};
                bg.push_back(cand);
            }
        }
        std::sort(bg.begin(), bg.end(), [](const BgCandidate& a, const BgCandidate& b) {
            if (a.rank != b.rank) return a.rank > b.rank;
            return a.cell_index < b.cell_index;
        });
        for (const BgCandidate& cand : bg) {
            if (used + kBytesPerBackground > *policy.budget_bytes) break;
            used += kBytesPerBackground;
            msg.background.push_back(cand.assertion);
        }
    }
    return msg;
}

DetectionMessage objectness_select(const AgentObservation& sender,
                                   const ScalarMap& sender_score, const GridSpec& grid,
                                   const CommPolicy& policy, double object_plane_height,
                                   std::uint64_t timestamp, std::uint32_t receiver_id) {
    policy.validate();
    if (sender_score.rows != grid.rows || sender_score.cols != grid.cols)
        throw std::invalid_argument("objectness_select: score map does not match grid");

    DetectionMessage msg;
    msg.sender_id = static_cast<std::uint32_t>(sender.agent_id);
    msg.receiver_id = receiver_id;
    msg.timestamp = timestamp;
    msg.sender_pose = sender.pose;

    std::vector<Candidate> candidates;

    // Cells are taken in the sender's own frame: the baseline gates on the
    // sender's belief alone.
    const auto consider = [&](double sender_x, double sender_y, int section,
                              int source_index, const Projected2D& d2,
                              const WireBox3D& d3) {
        const auto idx = cell_flat_index(sender_x, sender_y, grid);
        if (!idx) return;
        const double score = sender_score.values[static_cast<std::size_t>(*idx)];
        if (!(score > policy.demand_threshold)) return;
        Candidate cand;
        cand.rank = score;
        cand.cell_index = *idx;
        cand.section = section;
        cand.source_index = source_index;
        cand.bytes = section == 0 ? kBytesPer2D : kBytesPer3D;
        cand.det2d = d2;
        cand.det3d = d3;
        candidates.push_back(cand);
    };

    const std::vector<Projected2D> projected =
        project_2d_detections(sender, object_plane_height);
    for (std::size_t i = 0; i < projected.size(); ++i)
        consider(projected[i].x - sender.pose.x, projected[i].y - sender.pose.y, 0,
                 static_cast<int>(i), projected[i], {});

    for (std::size_t i = 0; i < sender.dets_3d.size(); ++i) {
        const Box3D& ego_det = sender.dets_3d[i];
        Box3D world = ego_det;
        world.x += sender.pose.x;
        world.y += sender.pose.y;
        consider(ego_det.x, ego_det.y, 1, static_cast<int>(i), {},
                 WireBox3D::from_box(world));
    }

    std::uint64_t used = 0;
    admit(candidates, policy.budget_bytes, used, msg);
    return msg;
}

}  // namespace cobev
