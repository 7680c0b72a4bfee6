// SPDX-License-Identifier: Apache-2.0
#include "cotforget/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace cotforget {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
    const double W = 520, H = 360, left = 60, right = 130, top = 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    for (const auto& s : series) {
        for (const auto& [x, _] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
    }
    if (!(xmin < xmax)) {
        xmin = xmin == std::numeric_limits<double>::infinity() ? 0.0 : xmin - 1.0;
        xmax = xmin + 2.0;
    }
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + (1.0 - std::clamp(y, 0.0, 1.0)) * ph; };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                      "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
           "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = i / 4.0;
        svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(py(y)) + "\" y2=\"" +
               num(py(y)) + "\" stroke=\"#ddd\"/>\n";
        svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" + num(y) +
               "</text>\n";
    }
    for (double x = xmin; x <= xmax + 1e-9; x += 1.0) {
        svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" +
               std::to_string(static_cast<long>(x)) + "</text>\n";
    }
    svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\">" +
           escape(x_label) + "</text>\n";
    svg += "<text transform=\"translate(16," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           escape(y_label) + "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const std::string color = kColors[si % std::size(kColors)];
        std::string path;
        bool pen_down = false;
        for (const auto& [x, y] : s.points) {
            if (!y) {
                pen_down = false;
                continue;
            }
            path += (pen_down ? " L" : " M") + num(px(x)) + " " + num(py(*y));
            pen_down = true;
            svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(*y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
        }
        if (!path.empty()) {
            svg += "<path d=\"" + path.substr(1) + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        }
        const double ly = top + 14 + 18 * static_cast<double>(si);
        svg += "<line x1=\"" + num(left + pw + 10) + "\" x2=\"" + num(left + pw + 30) + "\" y1=\"" + num(ly) +
               "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + num(left + pw + 34) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.name) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace cotforget
