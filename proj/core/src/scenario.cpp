// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cobev {

namespace {

using nlohmann::json;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

[[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("scenario: " + what);
}

const json& require(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) fail(std::string("missing required key '") + key + "'");
    return *it;
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    return it->get<T>();
}

GridSpec parse_grid(const json& g) {
    if (g.contains("half_extent"))
        return GridSpec::make_centered(g.at("half_extent").get<double>(),
                                       require(g, "resolution").get<double>());
    const auto lo = require(g, "extent_min").get<std::vector<double>>();
    const auto hi = require(g, "extent_max").get<std::vector<double>>();
    if (lo.size() != 2 || hi.size() != 2) fail("grid extents must be 2-vectors");
    return GridSpec::make(lo[0], lo[1], hi[0], hi[1],
                          require(g, "resolution").get<double>());
}

ConfidenceCalibration parse_calibration(const json& c) {
    ConfidenceCalibration cal;
    cal.true_mean = get_or(c, "true_mean", cal.true_mean);
    cal.true_jitter = get_or(c, "true_jitter", cal.true_jitter);
    cal.false_mean = get_or(c, "false_mean", cal.false_mean);
    cal.false_jitter = get_or(c, "false_jitter", cal.false_jitter);
    return cal;
}

DetectorProfile parse_detector(const json& d) {
    DetectorProfile p;
    p.miss_rate = get_or(d, "miss_rate", p.miss_rate);
    p.false_positive_rate_per_cell =
        get_or(d, "false_positive_rate_per_cell", p.false_positive_rate_per_cell);
    p.center_noise_sigma = get_or(d, "center_noise_sigma", p.center_noise_sigma);
    p.size_noise_sigma = get_or(d, "size_noise_sigma", p.size_noise_sigma);
    p.yaw_noise_sigma = get_or(d, "yaw_noise_sigma", p.yaw_noise_sigma);
    p.seed = get_or(d, "seed", p.seed);
    if (d.contains("confidence")) p.calibration = parse_calibration(d.at("confidence"));
    return p;
}

}  // namespace

void Scenario::validate() const {
    if (frames < 1) throw std::invalid_argument("Scenario: frames must be >= 1");
    scene.validate();
    if (static_cast<int>(detector_profiles.size()) != scene.agent_count)
        throw std::invalid_argument("Scenario: one detector profile per agent required");
    for (const DetectorProfile& p : detector_profiles) p.validate();
    if (detection_threshold < 0.0 || detection_threshold > 1.0)
        throw std::invalid_argument("Scenario: detection threshold must be in [0,1]");
    if (dedupe_radius < 0.0)
        throw std::invalid_argument("Scenario: dedupe radius must be >= 0");
    if (train_frames < 1)
        throw std::invalid_argument("Scenario: train_frames must be >= 1");
    train.validate();
}

Scenario parse_scenario(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail("top-level document must be an object");

    static const std::set<std::string> known_keys{
        "schema_version", "name",     "seed",   "frames", "grid",
        "agents",         "boxes",    "cameras", "detector", "detector_per_agent",
        "features",       "policy",   "fusion", "decode", "train"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!known_keys.count(key)) fail("unknown top-level key '" + key + "'");
    }

    const int version = require(doc, "schema_version").get<int>();
    if (version != kScenarioSchemaVersion)
        fail("unsupported schema_version " + std::to_string(version));

    Scenario s;
    s.name = get_or<std::string>(doc, "name", "scenario");
    s.seed = require(doc, "seed").get<std::uint64_t>();
    s.frames = require(doc, "frames").get<int>();
    s.scene.grid = parse_grid(require(doc, "grid"));

    const json& agents = require(doc, "agents");
    double sector_half_width_deg = 360.0;
    if (agents.contains("positions")) {
        for (const auto& p : agents.at("positions")) {
            const auto v = p.get<std::vector<double>>();
            if (v.size() != 3) fail("agent positions must be 3-vectors");
            s.scene.fixed_agent_positions.push_back({v[0], v[1], v[2]});
        }
        s.scene.agent_count = static_cast<int>(s.scene.fixed_agent_positions.size());
    } else {
        s.scene.agent_count = require(agents, "count").get<int>();
        s.scene.agent_ring_radius = get_or(agents, "ring_radius", s.scene.agent_ring_radius);
        s.scene.agent_altitude_min =
            get_or(agents, "altitude_min", s.scene.agent_altitude_min);
        s.scene.agent_altitude_max =
            get_or(agents, "altitude_max", s.scene.agent_altitude_max);
    }
    sector_half_width_deg =
        get_or(agents, "occlusion_sector_half_width_deg", sector_half_width_deg);

    const json& boxes = require(doc, "boxes");
    s.scene.box_count = require(boxes, "count").get<int>();
    s.scene.spawn_half_extent = get_or(boxes, "spawn_half_extent", s.scene.spawn_half_extent);
    s.scene.max_footprint_iou = get_or(boxes, "max_footprint_iou", s.scene.max_footprint_iou);
    s.scene.object_plane_height = get_or(boxes, "plane_height", s.scene.object_plane_height);
    const auto parse_range = [&boxes](const char* key, double& lo, double& hi) {
        if (!boxes.contains(key)) return;
        const auto v = boxes.at(key).get<std::vector<double>>();
        if (v.size() != 2) fail(std::string(key) + " must be a 2-vector");
        lo = v[0];
        hi = v[1];
    };
    parse_range("width_range", s.scene.box_sizes.w_min, s.scene.box_sizes.w_max);
    parse_range("height_range", s.scene.box_sizes.h_min, s.scene.box_sizes.h_max);
    parse_range("length_range", s.scene.box_sizes.l_min, s.scene.box_sizes.l_max);

    if (doc.contains("cameras")) {
        const json& cams = doc.at("cameras");
        s.scene.cameras_per_agent = get_or(cams, "per_agent", s.scene.cameras_per_agent);
        s.scene.camera_focal_px = get_or(cams, "focal_px", s.scene.camera_focal_px);
        s.scene.image_width = get_or(cams, "image_width", s.scene.image_width);
        s.scene.image_height = get_or(cams, "image_height", s.scene.image_height);
        s.scene.camera_tilt = deg2rad(get_or(cams, "tilt_deg", 0.0));
    }

    if (doc.contains("features")) {
        const json& feats = doc.at("features");
        s.scene.feature_channels = get_or(feats, "channels", s.scene.feature_channels);
        s.scene.feature_noise_sigma =
            get_or(feats, "noise_sigma", s.scene.feature_noise_sigma);
        s.scene.score_splat_factor =
            get_or(feats, "score_splat_factor", s.scene.score_splat_factor);
    }

    // Detector profiles: a shared default, optionally overridden per agent.
    DetectorProfile base;
    if (doc.contains("detector")) base = parse_detector(doc.at("detector"));
    s.detector_profiles.assign(s.scene.agent_count, base);
    if (doc.contains("detector_per_agent")) {
        const json& per = doc.at("detector_per_agent");
        if (static_cast<int>(per.size()) != s.scene.agent_count)
            fail("detector_per_agent must list one entry per agent");
        for (int a = 0; a < s.scene.agent_count; ++a)
            s.detector_profiles[a] = parse_detector(per.at(a));
    }
    // Complementary visibility: sector centers rotate evenly across agents.
    if (sector_half_width_deg < 180.0) {
        for (int a = 0; a < s.scene.agent_count; ++a) {
            s.detector_profiles[a].visibility.center =
                2.0 * std::numbers::pi * a / s.scene.agent_count;
            s.detector_profiles[a].visibility.half_width = deg2rad(sector_half_width_deg);
        }
    }

    if (doc.contains("policy")) {
        const json& pol = doc.at("policy");
        s.detection_threshold = get_or(pol, "detection_threshold", s.detection_threshold);
        s.bg_min_ego_uncertainty =
            get_or(pol, "bg_min_ego_uncertainty", s.bg_min_ego_uncertainty);
        if (pol.contains("bg_max_sender_score"))
            s.bg_max_sender_score = pol.at("bg_max_sender_score").get<double>();
    }
    if (doc.contains("fusion"))
        s.dedupe_radius = get_or(doc.at("fusion"), "dedupe_radius", s.dedupe_radius);
    if (doc.contains("decode"))
        s.decode_peak_threshold =
            get_or(doc.at("decode"), "peak_threshold", s.decode_peak_threshold);

    if (doc.contains("train")) {
        const json& tr = doc.at("train");
        s.train.learning_rate = get_or(tr, "learning_rate", s.train.learning_rate);
        s.train.epochs = get_or(tr, "epochs", s.train.epochs);
        s.train.focal_alpha = get_or(tr, "focal_alpha", s.train.focal_alpha);
        s.train.focal_beta = get_or(tr, "focal_beta", s.train.focal_beta);
        s.train.lambda_cls = get_or(tr, "lambda_cls", s.train.lambda_cls);
        s.train.lambda_reg = get_or(tr, "lambda_reg", s.train.lambda_reg);
        s.train.seed = get_or(tr, "seed", s.train.seed);
        s.train_frames = get_or(tr, "frames", s.train_frames);
        s.train_demand_threshold =
            get_or(tr, "demand_threshold", s.train_demand_threshold);
    }

    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scenario: cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str());
}

}  // namespace cobev
