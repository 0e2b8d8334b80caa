// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstddef>
#include <vector>

#include "cobev/geometry.hpp"

namespace cobev {

/// Dense rows x cols single-channel map, row-major.
struct ScalarMap {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    static ScalarMap make(int rows, int cols, double fill = 0.0);

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return values.size(); }

    bool operator==(const ScalarMap& o) const = default;
};

/// Dense rows x cols x channels grid over a GridSpec, cell-major layout:
/// the channel vector of one cell is contiguous.
struct BevGrid {
    GridSpec spec;
    int channels = 0;
    std::vector<double> values;

    static BevGrid make(const GridSpec& spec, int channels, double fill = 0.0);

    double at(int r, int c, int ch) const { return values[index(r, c, ch)]; }
    double& at(int r, int c, int ch) { return values[index(r, c, ch)]; }

    const double* cell(int r, int c) const { return values.data() + index(r, c, 0); }
    double* cell(int r, int c) { return values.data() + index(r, c, 0); }

    std::size_t index(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * spec.cols + c) * channels + ch;
    }

    bool operator==(const BevGrid& o) const = default;
};

/// Draws peak * exp(-(dr^2+dc^2) / (2 sigma^2)) around (row, col) into the
/// map, combining with existing values by max. Distances are measured in
/// whole cells from the peak cell, so the peak cell receives exactly `peak`.
/// sigma follows the usual center-heatmap rule sigma = (2 radius + 1) / 6.
void draw_gaussian_max(ScalarMap& map, int row, int col, double peak, double radius_cells);

/// Splat radius in cells for a box footprint of w x l meters.
double footprint_splat_radius(double w, double l, double resolution, double factor);

/// A map resampled into another agent's frame plus a same-shaped coverage
/// mask (1 where the source grid had data, 0 where `fill` was used).
struct AlignedMap {
    ScalarMap values;
    ScalarMap coverage;
};

/// Nearest-cell resampling of a map from the frame anchored at src_origin
/// into the frame anchored at dst_origin (frames share axis directions, so
/// the transform is a pure translation). Both frames use the same GridSpec.
AlignedMap align_to_frame(const ScalarMap& src, const GridSpec& spec,
                          const Vec3& src_origin, const Vec3& dst_origin,
                          double fill = 0.0);

}  // namespace cobev
