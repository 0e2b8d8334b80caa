// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cobev {

namespace {

constexpr double kPi = std::numbers::pi;

// Fixed per-channel encodings of the score map; the emulator stands in for a
// learned backbone, so any deterministic information-preserving family works.
double encode_channel(int channel, double s, double local_mean, double gx, double gy) {
    switch (channel % 8) {
        case 0: return s;
        case 1: return 1.0 - s;
        case 2: return s * s;
        case 3: return std::sqrt(std::max(0.0, s));
        case 4: return local_mean;
        case 5: return gx;
        case 6: return gy;
        default: return s * local_mean;
    }
}

double channel_scale(int channel) {
    double scale = 1.0;
    for (int k = 8; k <= channel; k += 8) scale *= 0.5;
    return scale;
}

}  // namespace

void ConfidenceCalibration::validate() const {
    const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(true_mean) || !in01(false_mean))
        throw std::invalid_argument("ConfidenceCalibration: means must be in [0,1]");
    if (true_jitter < 0.0 || false_jitter < 0.0)
        throw std::invalid_argument("ConfidenceCalibration: jitters must be >= 0");
    if (true_mean < false_mean)
        throw std::invalid_argument(
            "ConfidenceCalibration: true-detection scores must dominate false ones");
}

double ConfidenceCalibration::sample(bool is_true_detection, Rng& rng) const {
    const double mean = is_true_detection ? true_mean : false_mean;
    const double jitter = is_true_detection ? true_jitter : false_jitter;
    const double raw = mean + jitter * rng.uniform(-1.0, 1.0);
    return std::clamp(raw, 0.0, 1.0);
}

bool SectorMask::contains(double bearing) const {
    if (full()) return true;
    const double delta = std::abs(wrap_angle(bearing - center));
    return delta <= half_width;
}

void DetectorProfile::validate() const {
    const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(miss_rate) || !in01(false_positive_rate_per_cell))
        throw std::invalid_argument("DetectorProfile: rates must be in [0,1]");
    if (center_noise_sigma < 0.0 || size_noise_sigma < 0.0 || yaw_noise_sigma < 0.0)
        throw std::invalid_argument("DetectorProfile: noise sigmas must be >= 0");
    calibration.validate();
}

void SceneConfig::validate() const {
    if (agent_count < 1) throw std::invalid_argument("SceneConfig: need at least one agent");
    if (box_count < 0) throw std::invalid_argument("SceneConfig: negative box count");
    if (spawn_half_extent <= 0.0)
        throw std::invalid_argument("SceneConfig: spawn extent must be positive");
    if (feature_channels < 1)
        throw std::invalid_argument("SceneConfig: need at least one feature channel");
    if (cameras_per_agent < 1)
        throw std::invalid_argument("SceneConfig: need at least one camera");
    if (!fixed_agent_positions.empty() &&
        static_cast<int>(fixed_agent_positions.size()) != agent_count)
        throw std::invalid_argument(
            "SceneConfig: fixed agent positions must match agent_count");
}

double wrap_angle(double angle) {
    double a = std::fmod(angle, 2.0 * kPi);
    if (a > kPi) a -= 2.0 * kPi;
    if (a <= -kPi) a += 2.0 * kPi;
    return a;
}

std::array<double, 2> footprint_half_extents(double w, double l, double yaw) {
    const double c = std::abs(std::cos(yaw)), s = std::abs(std::sin(yaw));
    return {0.5 * (l * c + w * s), 0.5 * (l * s + w * c)};
}

double footprint_aabb_iou(const GroundTruthBox& a, const GroundTruthBox& b) {
    const auto ha = footprint_half_extents(a.w, a.l, a.yaw);
    const auto hb = footprint_half_extents(b.w, b.l, b.yaw);
    const double ix = std::max(0.0, std::min(a.x + ha[0], b.x + hb[0]) -
                                        std::max(a.x - ha[0], b.x - hb[0]));
    const double iy = std::max(0.0, std::min(a.y + ha[1], b.y + hb[1]) -
                                        std::max(a.y - ha[1], b.y - hb[1]));
    const double inter = ix * iy;
    const double area_a = 4.0 * ha[0] * ha[1];
    const double area_b = 4.0 * hb[0] * hb[1];
    const double uni = area_a + area_b - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(mix64(seed));

    Scene scene;
    scene.seed = seed;
    scene.grid = config.grid;
    scene.object_plane_height = config.object_plane_height;
    scene.feature_channels = config.feature_channels;
    scene.feature_noise_sigma = config.feature_noise_sigma;
    scene.score_splat_factor = config.score_splat_factor;

    scene.boxes.reserve(config.box_count);
    for (int i = 0; i < config.box_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < config.max_placement_attempts; ++attempt) {
            GroundTruthBox box;
            box.x = rng.uniform(-config.spawn_half_extent, config.spawn_half_extent);
            box.y = rng.uniform(-config.spawn_half_extent, config.spawn_half_extent);
            box.z = config.object_plane_height;
            box.w = rng.uniform(config.box_sizes.w_min, config.box_sizes.w_max);
            box.h = rng.uniform(config.box_sizes.h_min, config.box_sizes.h_max);
            box.l = rng.uniform(config.box_sizes.l_min, config.box_sizes.l_max);
            box.yaw = wrap_angle(rng.uniform(-kPi, kPi));
            box.object_id = i;

            const bool overlaps = std::any_of(
                scene.boxes.begin(), scene.boxes.end(), [&](const GroundTruthBox& other) {
                    return footprint_aabb_iou(box, other) > config.max_footprint_iou;
                });
            if (!overlaps) {
                scene.boxes.push_back(box);
                placed = true;
                break;
            }
        }
        if (!placed)
            throw std::runtime_error(
                "generate_scene: could not place box " + std::to_string(i) +
                " within the footprint overlap cap after " +
                std::to_string(config.max_placement_attempts) + " attempts");
    }

    scene.agents.reserve(config.agent_count);
    for (int a = 0; a < config.agent_count; ++a) {
        AgentState agent;
        agent.agent_id = a;
        if (!config.fixed_agent_positions.empty()) {
            agent.position = config.fixed_agent_positions[a];
        } else {
            const double base_angle = 2.0 * kPi * a / config.agent_count;
            const double angle = base_angle + rng.uniform(-0.1, 0.1);
            const double radius = config.agent_ring_radius * rng.uniform(0.8, 1.2);
            agent.position = {radius * std::cos(angle), radius * std::sin(angle),
                              rng.uniform(config.agent_altitude_min,
                                          config.agent_altitude_max)};
        }
        agent.rigs.reserve(config.cameras_per_agent);
        for (int cam = 0; cam < config.cameras_per_agent; ++cam) {
            const double azimuth = kPi * cam / config.cameras_per_agent;
            agent.rigs.emplace_back(
                config.camera_focal_px, config.camera_focal_px,
                config.image_width / 2.0, config.image_height / 2.0,
                camera_rotation_nadir(azimuth, config.camera_tilt), agent.position,
                config.image_width, config.image_height);
        }
        scene.agents.push_back(std::move(agent));
    }
    return scene;
}

namespace {

bool box_visible(const AgentState& agent, const DetectorProfile& profile,
                 const GroundTruthBox& box) {
    const double bearing = std::atan2(box.y - agent.position.y, box.x - agent.position.x);
    if (!profile.visibility.contains(bearing)) return false;
    const Vec3 center{box.x, box.y, box.z};
    for (const CameraRig& rig : agent.rigs) {
        const auto px = world_to_pixel(rig, center);
        if (px && pixel_in_image(rig, (*px)[0], (*px)[1])) return true;
    }
    return false;
}

void splat_detection(ScalarMap& score, const Scene& scene, const Box3D& det) {
    const auto cell = ego_to_bev({det.x, det.y, det.z}, scene.grid);
    if (!cell) return;
    const double radius = footprint_splat_radius(det.w, det.l, scene.grid.resolution,
                                                 scene.score_splat_factor);
    draw_gaussian_max(score, cell->row, cell->col, det.s, radius);
}

}  // namespace

AgentObservation observe(const Scene& scene, int agent_index, const DetectorProfile& profile) {
    profile.validate();
    if (agent_index < 0 || agent_index >= static_cast<int>(scene.agents.size()))
        throw std::invalid_argument("observe: agent index out of range");
    const AgentState& agent = scene.agents[agent_index];

    // Per-agent stream: scheduling order across agents never matters.
    Rng rng(mix64(scene.seed ^ profile.seed ^
                  (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(agent_index) + 1))));

    AgentObservation obs;
    obs.agent_id = agent.agent_id;
    obs.pose = agent.position;
    obs.rigs = agent.rigs;

    // True detections, in ground-truth order.
    for (const GroundTruthBox& box : scene.boxes) {
        if (!box_visible(agent, profile, box)) continue;
        if (rng.bernoulli(profile.miss_rate)) continue;

        Box3D det;
        det.x = box.x + rng.normal(0.0, profile.center_noise_sigma);
        det.y = box.y + rng.normal(0.0, profile.center_noise_sigma);
        det.z = box.z;
        det.w = std::max(0.2, box.w + rng.normal(0.0, profile.size_noise_sigma));
        det.h = std::max(0.2, box.h + rng.normal(0.0, profile.size_noise_sigma));
        det.l = std::max(0.2, box.l + rng.normal(0.0, profile.size_noise_sigma));
        det.yaw = wrap_angle(box.yaw + rng.normal(0.0, profile.yaw_noise_sigma));
        det.s = profile.calibration.sample(true, rng);
        // Store in the agent's ego frame.
        det.x -= agent.position.x;
        det.y -= agent.position.y;
        obs.dets_3d.push_back(det);
    }

    // False positives: one Bernoulli draw per grid cell, row-major.
    if (profile.false_positive_rate_per_cell > 0.0) {
        for (int r = 0; r < scene.grid.rows; ++r) {
            for (int c = 0; c < scene.grid.cols; ++c) {
                if (!rng.bernoulli(profile.false_positive_rate_per_cell)) continue;
                const double half = scene.grid.resolution / 2.0;
                Box3D det;
                det.x = scene.grid.cell_center_x(c) + rng.uniform(-half, half);
                det.y = scene.grid.cell_center_y(r) + rng.uniform(-half, half);
                det.z = scene.object_plane_height;
                det.w = rng.uniform(1.7, 2.1);
                det.h = rng.uniform(1.4, 1.8);
                det.l = rng.uniform(4.0, 5.0);
                det.yaw = wrap_angle(rng.uniform(-kPi, kPi));
                det.s = profile.calibration.sample(false, rng);
                obs.dets_3d.push_back(det);
            }
        }
    }

    // 2D detections: forward-project every 3D detection into every camera.
    obs.dets_2d.resize(agent.rigs.size());
    for (std::size_t cam = 0; cam < agent.rigs.size(); ++cam) {
        const CameraRig& rig = agent.rigs[cam];
        for (const Box3D& det : obs.dets_3d) {
            const Vec3 world = ego_to_world({det.x, det.y, det.z}, agent.position);
            const auto px = world_to_pixel(rig, world);
            if (!px || !pixel_in_image(rig, (*px)[0], (*px)[1])) continue;
            const double depth = (world - rig.position).norm();
            Box2D b2;
            b2.x = (*px)[0];
            b2.y = (*px)[1];
            b2.w = std::max(1.0, rig.fx * det.l / std::max(1.0, depth));
            b2.h = std::max(1.0, rig.fy * det.w / std::max(1.0, depth));
            b2.s = det.s;
            obs.dets_2d[cam].push_back(b2);
        }
    }

    // Score map: one Gaussian splat per detection, peak = confidence.
    obs.score_map = ScalarMap::make(scene.grid.rows, scene.grid.cols, 0.0);
    for (const Box3D& det : obs.dets_3d) splat_detection(obs.score_map, scene, det);

    // Stand-in BEV features: fixed local encodings of the score map + noise.
    obs.features = BevGrid::make(scene.grid, scene.feature_channels, 0.0);
    const ScalarMap& s = obs.score_map;
    for (int r = 0; r < scene.grid.rows; ++r) {
        for (int c = 0; c < scene.grid.cols; ++c) {
            double local_sum = 0.0;
            int local_n = 0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= s.rows || cc < 0 || cc >= s.cols) continue;
                    local_sum += s.at(rr, cc);
                    ++local_n;
                }
            }
            const double local_mean = local_sum / local_n;
            const double gx = c + 1 < s.cols && c > 0
                                  ? 0.5 * (s.at(r, c + 1) - s.at(r, c - 1))
                                  : 0.0;
            const double gy = r + 1 < s.rows && r > 0
                                  ? 0.5 * (s.at(r + 1, c) - s.at(r - 1, c))
                                  : 0.0;
            for (int ch = 0; ch < scene.feature_channels; ++ch) {
                double v = channel_scale(ch) *
                           encode_channel(ch, s.at(r, c), local_mean, gx, gy);
                if (scene.feature_noise_sigma > 0.0)
                    v += rng.normal(0.0, scene.feature_noise_sigma);
                obs.features.at(r, c, ch) = v;
            }
        }
    }
    return obs;
}

}  // namespace cobev
