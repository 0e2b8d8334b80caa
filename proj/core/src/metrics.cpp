// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

namespace cobev {

namespace {

double center_distance(const Box3D& pred, const GroundTruthBox& gt) {
    return std::hypot(pred.x - gt.x, pred.y - gt.y);
}

double yaw_error(double a, double b) {
    const double d = std::abs(wrap_angle(a - b));
    return d;  // wrap_angle yields (-pi, pi], so |d| is already in [0, pi]
}

// (confidence, is_true_positive) with deterministic ordering metadata.
struct PooledPred {
    double confidence;
    bool tp;
    int frame;
    int index;
};

std::vector<PooledPred> pool_predictions(const std::vector<FrameDetections>& frames,
                                         double dist_threshold) {
    std::vector<PooledPred> pooled;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const MatchResult match =
            match_detections(frames[f].preds, frames[f].gts, dist_threshold);
        std::vector<bool> tp(frames[f].preds.size(), false);
        for (const auto& pair : match.matches) tp[pair.pred_index] = true;
        for (std::size_t i = 0; i < frames[f].preds.size(); ++i)
            pooled.push_back({frames[f].preds[i].s, tp[i], static_cast<int>(f),
                              static_cast<int>(i)});
    }
    std::sort(pooled.begin(), pooled.end(), [](const PooledPred& a, const PooledPred& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.index < b.index;
    });
    return pooled;
}

}  // namespace

MatchResult match_detections(const std::vector<Box3D>& preds,
                             const std::vector<GroundTruthBox>& gts, double max_dist) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].s > preds[b].s; });

    MatchResult result;
    std::vector<bool> claimed(gts.size(), false);
    for (const std::size_t pi : order) {
        int best_gt = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (claimed[gi]) continue;
            const double d = center_distance(preds[pi], gts[gi]);
            if (d < max_dist && d < best_dist) {
                best_dist = d;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0) {
            claimed[best_gt] = true;
            result.matches.push_back({static_cast<int>(pi), best_gt, best_dist});
        } else {
            result.unmatched_preds.push_back(static_cast<int>(pi));
        }
    }
    for (std::size_t gi = 0; gi < gts.size(); ++gi)
        if (!claimed[gi]) result.unmatched_gts.push_back(static_cast<int>(gi));
    return result;
}

double average_precision(const std::vector<FrameDetections>& frames, double dist_threshold) {
    std::size_t total_gt = 0;
    for (const FrameDetections& f : frames) total_gt += f.gts.size();
    if (total_gt == 0) return 0.0;

    const std::vector<PooledPred> pooled = pool_predictions(frames, dist_threshold);
    if (pooled.empty()) return 0.0;

    // Raw precision-recall points over the confidence sweep.
    std::vector<double> recall(pooled.size()), precision(pooled.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < pooled.size(); ++k) {
        if (pooled[k].tp) ++tp;
        recall[k] = static_cast<double>(tp) / static_cast<double>(total_gt);
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }

    // Interpolated precision envelope at the 101-point recall grid, with the
    // low-recall and low-precision regions clipped.
    constexpr double min_recall = 0.1;
    constexpr double min_precision = 0.1;
    double area = 0.0;
    int grid_points = 0;
    // Envelope: best precision among operating points with recall >= r.
    std::vector<double> envelope(pooled.size());
    double running = 0.0;
    for (std::size_t k = pooled.size(); k-- > 0;) {
        running = std::max(running, precision[k]);
        envelope[k] = running;
    }
    for (int i = 11; i <= 100; ++i) {
        const double r = i / 100.0;
        // First operating point reaching recall r.
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        double p = 0.0;
        if (it != recall.end()) p = envelope[static_cast<std::size_t>(it - recall.begin())];
        area += std::max(0.0, p - min_precision);
        ++grid_points;
    }
    return area / grid_points / (1.0 - min_recall);
}

double aligned_iou(const Box3D& pred, const GroundTruthBox& gt) {
    const double vi = std::min(pred.w, gt.w) * std::min(pred.h, gt.h) *
                      std::min(pred.l, gt.l);
    const double vp = pred.w * pred.h * pred.l;
    const double vg = gt.w * gt.h * gt.l;
    const double uni = vp + vg - vi;
    return uni > 0.0 ? vi / uni : 0.0;
}

TpErrors tp_errors(const std::vector<FrameDetections>& frames) {
    TpErrors errors;
    double sum_ate = 0.0, sum_ase = 0.0, sum_aoe = 0.0;
    for (const FrameDetections& f : frames) {
        const MatchResult match = match_detections(f.preds, f.gts, kTpErrorMatchDistance);
        for (const auto& pair : match.matches) {
            const Box3D& p = f.preds[pair.pred_index];
            const GroundTruthBox& g = f.gts[pair.gt_index];
            sum_ate += pair.distance;
            sum_ase += 1.0 - aligned_iou(p, g);
            sum_aoe += yaw_error(p.yaw, g.yaw);
            ++errors.match_count;
        }
    }
    if (errors.match_count == 0) {
        errors.ate = 4.0;
        errors.ase = 1.0;
        errors.aoe = std::numbers::pi;
        return errors;
    }
    errors.ate = sum_ate / errors.match_count;
    errors.ase = sum_ase / errors.match_count;
    errors.aoe = sum_aoe / errors.match_count;
    return errors;
}

double composite_detection_score(double mean_ap, const TpErrors& errors) {
    const std::array<double, 3> normalized{errors.ate / 4.0, errors.ase,
                                           errors.aoe / std::numbers::pi};
    double score = 5.0 * mean_ap;
    for (const double e : normalized) score += 1.0 - std::min(1.0, e);
    return score / 8.0;
}

EvalReport evaluate(const std::vector<FrameDetections>& frames) {
    EvalReport report;
    for (std::size_t i = 0; i < kApDistanceThresholds.size(); ++i)
        report.ap_per_threshold[i] = average_precision(frames, kApDistanceThresholds[i]);
    report.map = std::accumulate(report.ap_per_threshold.begin(),
                                 report.ap_per_threshold.end(), 0.0) /
                 static_cast<double>(report.ap_per_threshold.size());

    const TpErrors errors = tp_errors(frames);
    report.mate = errors.ate;
    report.mase = errors.ase;
    report.maoe = errors.aoe;
    report.tp_count = errors.match_count;
    report.nds = composite_detection_score(report.map, errors);

    for (const FrameDetections& f : frames) {
        report.gt_count += static_cast<int>(f.gts.size());
        report.pred_count += static_cast<int>(f.preds.size());
    }
    return report;
}

std::string EvalReport::to_key_values() const {
    char buf[512];
    std::string out;
    const auto add = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%s %.6f\n", key, v);
        out += buf;
    };
    add("mAP", map);
    add("NDS", nds);
    add("mATE", mate);
    add("mASE", mase);
    add("mAOE", maoe);
    add("AP@0.5m", ap_per_threshold[0]);
    add("AP@1.0m", ap_per_threshold[1]);
    add("AP@2.0m", ap_per_threshold[2]);
    add("AP@4.0m", ap_per_threshold[3]);
    std::snprintf(buf, sizeof(buf), "gt_count %d\npred_count %d\ntp_count %d\n",
                  gt_count, pred_count, tp_count);
    out += buf;
    return out;
}

}  // namespace cobev
