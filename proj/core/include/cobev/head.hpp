// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cobev/fusion.hpp"
#include "cobev/grid.hpp"
#include "cobev/scene.hpp"

namespace cobev {

/// Regression targets per cell: center offsets (dx, dy) in cells, sizes
/// (w, h, l) in meters, heading as (sin yaw, cos yaw).
inline constexpr int kRegTargets = 7;

/// Per-cell linear decoder parameters over a (C + 5)-channel fused grid:
/// a logistic center classifier, R linear regressors, and the positional
/// embedding q shared with the fusion stage and trained jointly.
struct HeadParams {
    int feature_channels = 0;  // C
    std::vector<double> w_cls;  // C + 5
    double b_cls = 0.0;
    std::vector<double> w_reg;  // (C + 5) x kRegTargets, row-major by channel
    std::vector<double> b_reg;  // kRegTargets
    std::vector<double> q;      // C

    static HeadParams zeros(int feature_channels);
    int total_channels() const { return feature_channels + kBoxChannelCount; }
    std::size_t parameter_count() const;

    bool operator==(const HeadParams&) const = default;
};

/// Flat parameter vector in declared order (w_cls, b_cls, w_reg, b_reg, q).
std::vector<double> flatten(const HeadParams& params);
HeadParams unflatten(const std::vector<double>& values, int feature_channels);

void save_params(const HeadParams& params, const std::string& path);
HeadParams load_params(const std::string& path);

struct HeadOutput {
    ScalarMap heatmap;  // sigmoid of the per-cell classifier
    BevGrid reg;        // kRegTargets channels
};

/// Deterministic per-cell forward pass over a fused grid whose channel count
/// matches the parameters.
HeadOutput head_forward(const BevGrid& fused, const HeadParams& params);

/// Center-heatmap classification loss. target values in [0, 1] with exact
/// 1.0 at object-center cells; predictions are clamped to [1e-7, 1 - 1e-7].
/// Normalized by the number of target==1 cells (at least 1).
double gaussian_focal_loss(const ScalarMap& pred, const ScalarMap& target,
                           double alpha, double beta);

/// Mean absolute regression error over masked cells and all targets;
/// zero when the mask is empty.
double l1_reg_loss(const BevGrid& reg, const BevGrid& target,
                   const std::vector<std::uint8_t>& mask);

struct Targets {
    ScalarMap heatmap;
    BevGrid reg;
    std::vector<std::uint8_t> mask;  // 1 at ground-truth center cells
};

/// Renders training targets from ego-frame ground truth: Gaussian center
/// splats with peak exactly 1.0 and per-cell regression targets at centers.
/// Boxes outside the grid extent are skipped.
Targets render_targets(const std::vector<GroundTruthBox>& ego_boxes, const GridSpec& spec,
                       double splat_factor);

/// One training example. The fused grid is reassembled from these parts every
/// epoch because its embedding cells depend on the trainable q.
struct TrainSample {
    BevGrid base_features;          // C channels
    std::vector<VpePoint> vpe_points;
    BevGrid box_grid;               // kBoxChannelCount channels
    Targets targets;
};

TrainSample make_train_sample(BevGrid base_features, std::vector<VpePoint> vpe_points,
                              BevGrid box_grid, const std::vector<GroundTruthBox>& ego_gts,
                              double splat_factor);

/// Assembles the fused grid a sample presents to the decoder for a given
/// embedding: fuse(refine_features(F, vpe(q)), box_grid).
BevGrid assemble_fused(const TrainSample& sample, const std::vector<double>& q);

struct TrainConfig {
    double learning_rate = 0.2;
    int epochs = 200;
    double focal_alpha = 2.0;
    double focal_beta = 4.0;
    double lambda_cls = 1.0;
    double lambda_reg = 0.25;
    // Initial classifier bias, the logit of the expected foreground fraction.
    double init_cls_bias = -2.1972245773362196;  // sigmoid -> 0.1
    std::uint64_t seed = 0;

    void validate() const;
};

/// Mean total loss over the samples: lambda_cls * focal + lambda_reg * L1.
double total_loss(const std::vector<TrainSample>& samples, const HeadParams& params,
                  const TrainConfig& config);

/// Analytic gradient of total_loss with respect to every parameter,
/// returned in a HeadParams-shaped container.
HeadParams total_gradient(const std::vector<TrainSample>& samples, const HeadParams& params,
                          const TrainConfig& config);

struct TrainResult {
    HeadParams params;
    std::vector<double> loss_trace;  // loss before each step, plus final loss
};

/// Full-batch gradient descent from zero weights and the configured
/// classifier-bias prior. Throws when the loss turns non-finite.
TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& config,
                  int feature_channels);

/// Peak extraction: cells above peak_threshold that are >= their 3x3
/// neighborhood become boxes; center = cell center + (dx, dy) * resolution,
/// yaw = atan2(sin, cos), confidence = heatmap value, z fixed to box_z.
std::vector<Box3D> decode(const ScalarMap& heatmap, const BevGrid& reg,
                          const GridSpec& spec, double peak_threshold, double box_z);

}  // namespace cobev
