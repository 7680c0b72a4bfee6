// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cotforget {

struct Series {
    std::string name;
    std::vector<std::pair<double, std::optional<double>>> points;  // missing y breaks the line
};

/// Minimal standalone SVG line chart with a y range of [0, 1].
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

}  // namespace cotforget
