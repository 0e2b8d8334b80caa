// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cobev/grid.hpp"
#include "cobev/scene.hpp"

namespace cobev {

/// Which gating rule a sender applies when deciding what to transmit.
enum class PolicyKind { uncertainty, objectness };

/// Gating parameters for detection sharing.
///
/// * detection_threshold is the score-map decision threshold used by the
///   uncertainty transform.
/// * demand_threshold gates detections: a detection is shared when the demand
///   at its BEV cell strictly exceeds it (uncertainty policy), or when the
///   sender's own score at its cell strictly exceeds it (objectness policy).
/// * budget_bytes, when set, admits ranked items front-to-back until the next
///   item would overflow the budget.
/// * background_priority enables the certain-background tier: with budget
///   left after detections, the sender also asserts cells it confidently
///   classifies as empty but the receiver is uncertain about.
struct CommPolicy {
    PolicyKind kind = PolicyKind::uncertainty;
    double detection_threshold = 0.15;
    double demand_threshold = 0.0;
    std::optional<std::uint64_t> budget_bytes;
    bool background_priority = false;

    // Certain-background tier bounds. A cell qualifies when the sender's
    // score is below both detection_threshold and bg_max_sender_score
    // (default detection_threshold / 4) and the receiver's uncertainty is at
    // least bg_min_ego_uncertainty.
    std::optional<double> bg_max_sender_score;
    double bg_min_ego_uncertainty = 0.5;

    void validate() const;
    double background_score_cap() const;
};

/// 2D detection projected to the ground plane: world-frame (x, y) plus
/// confidence. float fields: these are exactly what crosses the wire.
struct Projected2D {
    float x = 0, y = 0, s = 0;
    bool operator==(const Projected2D&) const = default;
};

/// 3D detection as transmitted: world-frame box, float fields.
struct WireBox3D {
    float x = 0, y = 0, z = 0;
    float w = 0, h = 0, l = 0;
    float yaw = 0, s = 0;
    bool operator==(const WireBox3D&) const = default;

    static WireBox3D from_box(const Box3D& b);
    Box3D to_box() const;
};

/// Certain-background assertion: world-frame cell center plus the sender's
/// certainty that the cell is empty.
struct BackgroundAssertion {
    float x = 0, y = 0, certainty = 0;
    bool operator==(const BackgroundAssertion&) const = default;
};

/// The only inter-agent payload: pose metadata plus selected detections.
/// All detection coordinates are world-frame, so the receiver needs only its
/// own pose to rasterize them.
struct DetectionMessage {
    std::uint32_t sender_id = 0;
    std::uint32_t receiver_id = 0;
    std::uint64_t timestamp = 0;
    Vec3 sender_pose;  // 3 x 64-bit on the wire
    std::vector<Projected2D> dets_2d;
    std::vector<WireBox3D> dets_3d;
    std::vector<BackgroundAssertion> background;

    bool operator==(const DetectionMessage&) const = default;
};

inline constexpr std::uint8_t kWireFormatVersion = 1;
/// version(1) + sender(4) + receiver(4) + timestamp(8) + pose(24) + 3 counts.
inline constexpr std::size_t kMessageHeaderBytes = 47;
inline constexpr std::size_t kBytesPer2D = 12;
inline constexpr std::size_t kBytesPer3D = 32;
inline constexpr std::size_t kBytesPerBackground = 12;

/// Uncertainty transform of a classification score map:
/// U = 1 - |S - threshold|, elementwise. Peaks where the score sits at the
/// decision threshold; confident foreground scores the lowest uncertainty.
ScalarMap uncertainty_map(const ScalarMap& scores, double detection_threshold);

/// Demand of the ego (i) toward a sender (j): R = U_i * (1 - U_j),
/// elementwise. High where the ego is uncertain and the sender is not.
/// Both maps must already live on the same grid/frame.
ScalarMap demand_map(const ScalarMap& ego_uncertainty, const ScalarMap& sender_uncertainty);

/// Variable-length payload bytes of a message (header excluded):
/// 12 per projected 2D point, 32 per 3D box, 12 per background assertion.
std::size_t payload_bytes(const DetectionMessage& msg);

/// Detection-only volume in the log2 accounting convention:
/// log2(K * 12 + K_hat * 32). Empty detection payloads have no defined
/// volume and report nullopt (a zero-byte channel, not -inf).
std::optional<double> comm_volume_log2(const DetectionMessage& msg);

std::vector<std::uint8_t> encode_message(const DetectionMessage& msg);
DetectionMessage decode_message(std::span<const std::uint8_t> bytes);

/// Inputs the sender-side gating needs beyond its own observation. All maps
/// live on the ego grid in the ego (receiver) frame.
struct DemandContext {
    const GridSpec* grid = nullptr;
    Vec3 ego_pose;
    const ScalarMap* demand = nullptr;            // R over ego cells
    const ScalarMap* ego_uncertainty = nullptr;   // U_i
    const ScalarMap* sender_score = nullptr;      // sender S aligned to ego frame
    const ScalarMap* sender_coverage = nullptr;   // 1 where the sender grid had data
    double object_plane_height = 1.5;
    std::uint64_t timestamp = 0;
    std::uint32_t receiver_id = 0;
};

/// Uncertainty-driven selection: includes exactly the sender's detections
/// whose ego-frame BEV cell has demand > demand_threshold, ranked by demand
/// descending (ties: cell row-major, 2D before 3D, then source order) and
/// admitted front-to-back under budget_bytes. With background_priority and
/// budget remaining, appends certain-background assertions ranked the same
/// way. 2D detections enter as ground-plane projections through the sender's
/// cameras. Detections outside the ego grid are never transmitted.
DetectionMessage select_shared(const AgentObservation& sender, const DemandContext& ctx,
                               const CommPolicy& policy);

/// Objectness-driven baseline: same message shape, but detections are gated
/// and ranked purely by the sender's own score map at their cells in the
/// sender frame. No background tier.
DetectionMessage objectness_select(const AgentObservation& sender,
                                   const ScalarMap& sender_score, const GridSpec& grid,
                                   const CommPolicy& policy, double object_plane_height,
                                   std::uint64_t timestamp, std::uint32_t receiver_id);

/// Ground-plane projections of one agent's 2D detections through its own
/// cameras (world frame). Detections whose ray misses the plane are skipped.
std::vector<Projected2D> project_2d_detections(const AgentObservation& obs,
                                               double object_plane_height);

}  // namespace cobev
