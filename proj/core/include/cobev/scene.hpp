// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <vector>

#include "cobev/geometry.hpp"
#include "cobev/grid.hpp"
#include "cobev/rng.hpp"

namespace cobev {

/// Axis convention for boxes: l (length) runs along the heading yaw,
/// w (width) across it, h (height) vertically. yaw is in (-pi, pi].
struct GroundTruthBox {
    double x = 0, y = 0, z = 0;
    double w = 0, h = 0, l = 0;
    double yaw = 0;
    int object_id = 0;

    bool operator==(const GroundTruthBox&) const = default;
};

/// 2D detection in pixel coordinates with confidence in [0, 1].
struct Box2D {
    double x = 0, y = 0;   // center, pixels
    double w = 0, h = 0;   // size, pixels
    double s = 0;          // confidence

    bool operator==(const Box2D&) const = default;
};

/// 3D detection: center, size, heading, confidence.
struct Box3D {
    double x = 0, y = 0, z = 0;
    double w = 0, h = 0, l = 0;
    double yaw = 0;
    double s = 0;

    bool operator==(const Box3D&) const = default;
};

/// Maps the true/false-detection indicator to a confidence distribution.
/// Scores are mean + jitter * uniform(-1, 1), clamped to [0, 1]; with zero
/// jitter the map is deterministic. true_mean must dominate false_mean.
struct ConfidenceCalibration {
    double true_mean = 0.85;
    double true_jitter = 0.10;
    double false_mean = 0.30;
    double false_jitter = 0.15;

    void validate() const;
    double sample(bool is_true_detection, Rng& rng) const;

    bool operator==(const ConfidenceCalibration&) const = default;
};

/// Angular visibility region around the agent in the horizontal plane.
/// A target is visible iff the bearing from the agent to the target lies
/// within half_width of center (all angles radians). half_width >= pi means
/// unrestricted visibility.
struct SectorMask {
    double center = 0.0;
    double half_width = 4.0;  // > pi: full circle

    bool full() const { return half_width >= 3.15; }
    bool contains(double bearing) const;

    bool operator==(const SectorMask&) const = default;
};

struct DetectorProfile {
    double miss_rate = 0.0;
    double false_positive_rate_per_cell = 0.0;
    double center_noise_sigma = 0.0;  // meters, horizontal
    double size_noise_sigma = 0.0;    // meters
    double yaw_noise_sigma = 0.0;     // radians
    ConfidenceCalibration calibration;
    SectorMask visibility;
    std::uint64_t seed = 0;

    void validate() const;

    bool operator==(const DetectorProfile&) const = default;
};

struct AgentState {
    int agent_id = 0;
    Vec3 position;  // ego-frame origin in world coordinates
    std::vector<CameraRig> rigs;
};

struct BoxSizeRange {
    double w_min = 1.7, w_max = 2.1;
    double h_min = 1.4, h_max = 1.8;
    double l_min = 4.0, l_max = 5.0;
};

struct SceneConfig {
    GridSpec grid = GridSpec::make_centered(102.4, 0.8);
    int agent_count = 5;
    int box_count = 16;
    double max_footprint_iou = 0.05;   // placement cap, axis-aligned footprints
    int max_placement_attempts = 200;  // per box
    double spawn_half_extent = 80.0;   // boxes placed in [-s, s]^2 around origin
    BoxSizeRange box_sizes;
    double object_plane_height = 1.5;  // box centers sit at this z

    double agent_ring_radius = 25.0;
    double agent_altitude_min = 50.0;
    double agent_altitude_max = 60.0;
    // Non-empty: agents use these exact positions (size must equal
    // agent_count) instead of the jittered ring sampler.
    std::vector<Vec3> fixed_agent_positions;

    int cameras_per_agent = 4;
    double camera_focal_px = 160.0;
    int image_width = 704;
    int image_height = 256;
    double camera_tilt = 0.0;  // radians from nadir

    int feature_channels = 16;
    double feature_noise_sigma = 0.05;
    double score_splat_factor = 0.5;

    void validate() const;
};

/// A single-frame world: ground-truth boxes plus agent states. Carries the
/// generation parameters the detector emulator needs.
struct Scene {
    std::uint64_t seed = 0;
    GridSpec grid;
    double object_plane_height = 1.5;
    int feature_channels = 16;
    double feature_noise_sigma = 0.0;
    double score_splat_factor = 0.5;
    std::vector<GroundTruthBox> boxes;
    std::vector<AgentState> agents;
};

/// Everything one agent perceives in a frame: its own 2D detections per
/// camera, 3D detections in its ego frame, the BEV classification score map,
/// and the stand-in BEV feature grid.
struct AgentObservation {
    int agent_id = 0;
    Vec3 pose;  // ego-frame origin in world coordinates
    std::vector<CameraRig> rigs;
    std::vector<std::vector<Box2D>> dets_2d;  // one list per camera
    std::vector<Box3D> dets_3d;               // ego frame
    ScalarMap score_map;
    BevGrid features;

    bool operator==(const AgentObservation&) const = default;
};

/// Deterministic scene synthesis: boxes rejection-sampled under the footprint
/// IoU cap, agents placed on a jittered ring. Throws when the requested box
/// count cannot be placed within max_placement_attempts tries per box.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Detector emulation for one agent. Visible (in-sector, in-frustum) ground
/// truth boxes survive with probability 1 - miss_rate and are perturbed by
/// the profile's noise; false positives are Bernoulli-sampled per grid cell.
/// Pure given (scene, agent, profile): the RNG stream is derived from
/// scene.seed, profile.seed and the agent id only.
AgentObservation observe(const Scene& scene, int agent_index, const DetectorProfile& profile);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

/// Axis-aligned bounding box of a rotated footprint, as (half_x, half_y).
std::array<double, 2> footprint_half_extents(double w, double l, double yaw);

/// IoU of the axis-aligned footprint bounds of two boxes. Used only as the
/// placement overlap cap in scene generation.
double footprint_aabb_iou(const GroundTruthBox& a, const GroundTruthBox& b);

}  // namespace cobev
