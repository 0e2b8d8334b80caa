// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "cobev/scene.hpp"

namespace cobev {

/// Center-distance thresholds (meters) the AP is averaged over.
inline constexpr std::array<double, 4> kApDistanceThresholds{0.5, 1.0, 2.0, 4.0};
/// Matching distance used for the true-positive error metrics.
inline constexpr double kTpErrorMatchDistance = 2.0;

struct MatchResult {
    struct Pair {
        int pred_index = 0;
        int gt_index = 0;
        double distance = 0.0;
    };
    std::vector<Pair> matches;
    std::vector<int> unmatched_preds;
    std::vector<int> unmatched_gts;
};

/// Greedy confidence-descending matching: each prediction (ties broken by
/// index) claims the nearest unclaimed ground truth within horizontal center
/// distance < max_dist (nearest ties broken by ground-truth index).
MatchResult match_detections(const std::vector<Box3D>& preds,
                             const std::vector<GroundTruthBox>& gts, double max_dist);

/// Predictions and ground truth of one evaluated frame, both in the frame's
/// ego coordinates.
struct FrameDetections {
    std::vector<Box3D> preds;
    std::vector<GroundTruthBox> gts;
};

/// Average precision at one distance threshold, pooled over frames:
/// matching per frame, then a global precision-recall curve over the
/// confidence sweep. 101-point interpolated precision with recall < 0.1 and
/// precision < 0.1 clipped. Zero when there is no ground truth.
double average_precision(const std::vector<FrameDetections>& frames, double dist_threshold);

struct TpErrors {
    double ate = 0.0;  // mean horizontal center distance, meters
    double ase = 0.0;  // mean 1 - IoU of center/yaw-aligned boxes
    double aoe = 0.0;  // mean |yaw error| wrapped to [0, pi]
    int match_count = 0;
};

/// True-positive errors over matches at kTpErrorMatchDistance. With no
/// matches at all, every error reports its maximum (4 m, 1, pi) so the
/// composite score degrades to the AP term alone.
TpErrors tp_errors(const std::vector<FrameDetections>& frames);

/// Composite detection score in [0, 1]:
/// (1/8) * (5 * mAP + sum over {ate/4m, ase, aoe/pi} of (1 - min(1, err))).
double composite_detection_score(double mean_ap, const TpErrors& errors);

struct EvalReport {
    double map = 0.0;
    double nds = 0.0;
    double mate = 0.0;
    double mase = 0.0;
    double maoe = 0.0;
    std::array<double, 4> ap_per_threshold{};
    int gt_count = 0;
    int pred_count = 0;
    int tp_count = 0;  // matches at the TP-error distance

    /// Flat key-value text record, one `key value` pair per line.
    std::string to_key_values() const;
};

EvalReport evaluate(const std::vector<FrameDetections>& frames);

/// IoU of two boxes after aligning centers and yaw (the scale-error IoU):
/// min-dimension volume over union volume.
double aligned_iou(const Box3D& pred, const GroundTruthBox& gt);

}  // namespace cobev
