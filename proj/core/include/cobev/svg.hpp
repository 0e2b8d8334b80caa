// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <array>
#include <string>
#include <vector>

namespace cobev {

/// Minimal deterministic line chart, written as a standalone SVG document.
struct SvgSeries {
    std::string label;
    std::string color = "#1f77b4";
    std::vector<std::array<double, 2>> points;  // (x, y)
};

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<SvgSeries>& series);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace cobev
