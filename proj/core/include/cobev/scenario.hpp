// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cobev/comms.hpp"
#include "cobev/head.hpp"
#include "cobev/scene.hpp"

namespace cobev {

/// A fully resolved simulation suite: world generation parameters, per-agent
/// detector profiles, communication and decoding defaults, and training
/// settings. Loaded from a versioned JSON document (see docs/scenario.md).
struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    int frames = 1;

    SceneConfig scene;
    std::vector<DetectorProfile> detector_profiles;  // one per agent

    double detection_threshold = 0.15;
    std::optional<double> bg_max_sender_score;
    double bg_min_ego_uncertainty = 0.5;

    double dedupe_radius = 1.0;
    double decode_peak_threshold = 0.30;

    TrainConfig train;
    int train_frames = 32;
    double train_demand_threshold = 0.0;  // sharing gate used while training

    void validate() const;
};

inline constexpr int kScenarioSchemaVersion = 1;

/// Parses a scenario from JSON text. Unknown keys are rejected at the top
/// level; a wrong or missing schema_version is an error.
Scenario parse_scenario(const std::string& json_text);

Scenario load_scenario(const std::string& path);

}  // namespace cobev
