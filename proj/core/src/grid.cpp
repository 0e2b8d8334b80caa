// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cobev {

ScalarMap ScalarMap::make(int rows, int cols, double fill) {
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument("ScalarMap: dimensions must be positive");
    ScalarMap map;
    map.rows = rows;
    map.cols = cols;
    map.values.assign(static_cast<std::size_t>(rows) * cols, fill);
    return map;
}

BevGrid BevGrid::make(const GridSpec& spec, int channels, double fill) {
    if (channels <= 0)
        throw std::invalid_argument("BevGrid: channel count must be positive");
    BevGrid grid;
    grid.spec = spec;
    grid.channels = channels;
    grid.values.assign(static_cast<std::size_t>(spec.cell_count()) * channels, fill);
    return grid;
}

void draw_gaussian_max(ScalarMap& map, int row, int col, double peak, double radius_cells) {
    const int radius = std::max(1, static_cast<int>(std::ceil(radius_cells)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

    const int r0 = std::max(0, row - radius);
    const int r1 = std::min(map.rows - 1, row + radius);
    const int c0 = std::max(0, col - radius);
    const int c1 = std::min(map.cols - 1, col + radius);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dr = r - row;
            const double dc = c - col;
            const double value = peak * std::exp(-(dr * dr + dc * dc) * inv_two_sigma_sq);
            map.at(r, c) = std::max(map.at(r, c), value);
        }
    }
}

double footprint_splat_radius(double w, double l, double resolution, double factor) {
    return std::max(1.0, factor * std::sqrt(std::max(0.0, w * l)) / resolution);
}

AlignedMap align_to_frame(const ScalarMap& src, const GridSpec& spec,
                          const Vec3& src_origin, const Vec3& dst_origin,
                          double fill) {
    if (src.rows != spec.rows || src.cols != spec.cols)
        throw std::invalid_argument("align_to_frame: map does not match grid spec");

    AlignedMap out{ScalarMap::make(spec.rows, spec.cols, fill),
                   ScalarMap::make(spec.rows, spec.cols, 0.0)};
    // Offset from a dst-frame point to the same physical point in src frame.
    const double dx = dst_origin.x - src_origin.x;
    const double dy = dst_origin.y - src_origin.y;
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const double x = spec.cell_center_x(c) + dx;
            const double y = spec.cell_center_y(r) + dy;
            const RawCell cell = bev_cell_raw(x, y, spec);
            if (cell.row < 0 || cell.row >= spec.rows || cell.col < 0 ||
                cell.col >= spec.cols)
                continue;
            out.values.at(r, c) = src.at(static_cast<int>(cell.row),
                                         static_cast<int>(cell.col));
            out.coverage.at(r, c) = 1.0;
        }
    }
    return out;
}

}  // namespace cobev
