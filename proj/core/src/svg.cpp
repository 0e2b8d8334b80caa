// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace cobev {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<SvgSeries>& series) {
    constexpr double width = 640, height = 420;
    constexpr double ml = 70, mr = 30, mt = 50, mb = 60;

    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
    double y_min = std::numeric_limits<double>::infinity(), y_max = -y_min;
    for (const SvgSeries& s : series) {
        for (const auto& p : s.points) {
            x_min = std::min(x_min, p[0]);
            x_max = std::max(x_max, p[0]);
            y_min = std::min(y_min, p[1]);
            y_max = std::max(y_max, p[1]);
        }
    }
    if (!(x_min <= x_max)) {  // no points at all
        x_min = 0;
        x_max = 1;
        y_min = 0;
        y_max = 1;
    }
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;
    const double x_pad = 0.05 * (x_max - x_min), y_pad = 0.05 * (y_max - y_min);
    x_min -= x_pad;
    x_max += x_pad;
    y_min -= y_pad;
    y_max += y_pad;

    const auto px = [&](double x) {
        return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr);
    };
    const auto py = [&](double y) {
        return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb);
    };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
           "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " +
           fmt(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(width / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";

    // Axes with four ticks each.
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
           fmt(width - mr) + "\" y2=\"" + fmt(height - mb) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
           "\" y2=\"" + fmt(height - mb) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x_min + (x_max - x_min) * i / 4.0;
        const double yv = y_min + (y_max - y_min) * i / 4.0;
        out += "<line x1=\"" + fmt(px(xv)) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
               fmt(px(xv)) + "\" y2=\"" + fmt(height - mb + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(height - mb + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               fmt(xv) + "</text>\n";
        out += "<line x1=\"" + fmt(ml - 5) + "\" y1=\"" + fmt(py(yv)) + "\" x2=\"" +
               fmt(ml) + "\" y2=\"" + fmt(py(yv)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(py(yv) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               fmt(yv) + "</text>\n";
    }
    out += "<text x=\"" + fmt((ml + width - mr) / 2) + "\" y=\"" + fmt(height - 15) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
           x_label + "</text>\n";
    out += "<text x=\"18\" y=\"" + fmt((mt + height - mb) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 18 " + fmt((mt + height - mb) / 2) + ")\">" +
           y_label + "</text>\n";

    int legend_row = 0;
    for (const SvgSeries& s : series) {
        if (s.points.empty()) continue;
        std::string path = "M";
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            if (i > 0) path += " L";
            path += " " + fmt(px(s.points[i][0])) + " " + fmt(py(s.points[i][1]));
        }
        out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"2\"/>\n";
        for (const auto& p : s.points)
            out += "<circle cx=\"" + fmt(px(p[0])) + "\" cy=\"" + fmt(py(p[1])) +
                   "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
        const double ly = mt + 14.0 * legend_row++;
        out += "<rect x=\"" + fmt(width - mr - 150) + "\" y=\"" + fmt(ly - 8) +
               "\" width=\"10\" height=\"10\" fill=\"" + s.color + "\"/>\n";
        out += "<text x=\"" + fmt(width - mr - 136) + "\" y=\"" + fmt(ly + 1) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace cobev
