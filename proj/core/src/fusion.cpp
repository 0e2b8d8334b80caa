// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cobev {

BevGrid build_vpe(const std::vector<VpePoint>& points, const VpeParams& params,
                  const GridSpec& spec, RasterStats* stats) {
    const int channels = static_cast<int>(params.q.size());
    if (channels <= 0) throw std::invalid_argument("build_vpe: empty embedding");
    BevGrid grid = BevGrid::make(spec, channels, 0.0);

    // Per-cell max confidence, then one embedding write per occupied cell.
    ScalarMap conf = ScalarMap::make(spec.rows, spec.cols, -1.0);
    int skipped = 0;
    for (const VpePoint& p : points) {
        if (p.row < 0 || p.row >= spec.rows || p.col < 0 || p.col >= spec.cols) {
            ++skipped;
            continue;
        }
        conf.at(p.row, p.col) = std::max(conf.at(p.row, p.col), p.confidence);
    }
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const double s = conf.at(r, c);
            if (s < 0.0) continue;
            double* cell = grid.cell(r, c);
            for (int ch = 0; ch < channels; ++ch) cell[ch] = s * params.q[ch];
        }
    }
    if (stats) stats->skipped_out_of_range = skipped;
    return grid;
}

BevGrid refine_features(const BevGrid& features, const BevGrid& vpe) {
    if (features.spec != vpe.spec || features.channels != vpe.channels)
        throw std::invalid_argument("refine_features: dimension mismatch");
    BevGrid out = features;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += vpe.values[i];
    return out;
}

BevGrid build_bobev(const std::vector<Box3D>& ego_boxes, const GridSpec& spec,
                    RasterStats* stats) {
    BevGrid grid = BevGrid::make(spec, kBoxChannelCount, 0.0);
    ScalarMap best = ScalarMap::make(spec.rows, spec.cols, -1.0);
    int skipped = 0;
    for (const Box3D& box : ego_boxes) {
        const auto cell = ego_to_bev({box.x, box.y, box.z}, spec);
        if (!cell) {
            ++skipped;
            continue;
        }
        if (box.s <= best.at(cell->row, cell->col)) continue;
        best.at(cell->row, cell->col) = box.s;
        double* out = grid.cell(cell->row, cell->col);
        out[0] = box.w;
        out[1] = box.h;
        out[2] = box.l;
        out[3] = box.yaw;
        out[4] = box.s;
    }
    if (stats) stats->skipped_out_of_range = skipped;
    return grid;
}

BevGrid fuse(const BevGrid& refined, const BevGrid& box_grid) {
    if (refined.spec != box_grid.spec)
        throw std::invalid_argument("fuse: grid spec mismatch");
    BevGrid out = BevGrid::make(refined.spec, refined.channels + box_grid.channels, 0.0);
    for (int r = 0; r < out.spec.rows; ++r) {
        for (int c = 0; c < out.spec.cols; ++c) {
            double* dst = out.cell(r, c);
            const double* a = refined.cell(r, c);
            const double* b = box_grid.cell(r, c);
            std::copy(a, a + refined.channels, dst);
            std::copy(b, b + box_grid.channels, dst + refined.channels);
        }
    }
    return out;
}

std::vector<Box3D> dedupe_received(const std::vector<Box3D>& boxes, double radius_m) {
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return boxes[a].s > boxes[b].s;
    });

    std::vector<Box3D> kept;
    kept.reserve(boxes.size());
    for (const std::size_t i : order) {
        const Box3D& box = boxes[i];
        const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const Box3D& k) {
            return std::hypot(box.x - k.x, box.y - k.y) < radius_m;
        });
        if (!duplicate) kept.push_back(box);
    }
    return kept;
}

}  // namespace cobev
