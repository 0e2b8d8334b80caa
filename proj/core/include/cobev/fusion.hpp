// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <vector>

#include "cobev/grid.hpp"
#include "cobev/scene.hpp"

namespace cobev {

/// One received 2D-projection point quantized into the ego grid. row/col may
/// lie outside the grid; rasterization skips and counts such points.
struct VpePoint {
    int row = 0;
    int col = 0;
    double confidence = 0.0;
};

/// Learned per-channel positional feature placed at received-detection cells.
struct VpeParams {
    std::vector<double> q;
};

struct RasterStats {
    int skipped_out_of_range = 0;
};

/// Confidence-weighted positional embedding: cell (row, col) holds
/// confidence * q for every listed point, zero elsewhere. Multiple points in
/// one cell keep the maximum confidence.
BevGrid build_vpe(const std::vector<VpePoint>& points, const VpeParams& params,
                  const GridSpec& spec, RasterStats* stats = nullptr);

/// Adds the positional embedding into the feature grid, elementwise.
BevGrid refine_features(const BevGrid& features, const BevGrid& vpe);

inline constexpr int kBoxChannelCount = 5;  // (w, h, l, yaw, s)

/// Rasterizes received 3D boxes: the cell of each box center holds
/// (w, h, l, yaw, s); collisions keep the higher-confidence box.
BevGrid build_bobev(const std::vector<Box3D>& ego_boxes, const GridSpec& spec,
                    RasterStats* stats = nullptr);

/// Channelwise concatenation, refined features first.
BevGrid fuse(const BevGrid& refined, const BevGrid& box_grid);

/// Greedy duplicate suppression for boxes gathered from several senders:
/// confidence-descending; a box is dropped when its horizontal center
/// distance to an already kept box is below radius_m.
std::vector<Box3D> dedupe_received(const std::vector<Box3D>& boxes, double radius_m);

}  // namespace cobev
