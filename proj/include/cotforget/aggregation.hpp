// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/metrics.hpp"

namespace cotforget {

inline constexpr double kDefaultEpsilon = 1e-6;

/// n / sum(1/v) after clamping each value to [epsilon, 1].
double harmonic_mean(std::span<const double> values, double epsilon = kDefaultEpsilon);

/// 1 - score; score must lie in [0,1].
double invert(double score);

struct Component {
    double raw = 0.0;
    double used = 0.0;  // after inversion, when applicable
    bool inverted = false;
};

struct AggregateScores {
    double mu = 0.0;
    double afe = 0.0;
    double cfe = 0.0;
    std::map<std::string, Component> components;  // "set.metric" -> values
    double epsilon = kDefaultEpsilon;

    /// Arithmetic mean of MU, AFE and CFE (the grid's Avg. column).
    double avg() const { return (mu + afe + cfe) / 3.0; }
    nlohmann::json to_json() const;
};

double compute_mu(const MetricReport& report, double epsilon = kDefaultEpsilon,
                  std::map<std::string, Component>* components = nullptr);
double compute_afe(const MetricReport& report, double epsilon = kDefaultEpsilon,
                   std::map<std::string, Component>* components = nullptr);
double compute_cfe(const MetricReport& report, double epsilon = kDefaultEpsilon,
                   std::map<std::string, Component>* components = nullptr);

AggregateScores aggregate(const MetricReport& report, double epsilon = kDefaultEpsilon);

/// One row of the method x strategy x scale grid.
struct GridRow {
    std::string method;
    std::string strategy;
    std::string scale;
    int epoch = 0;
    double mu = 0.0, afe = 0.0, cfe = 0.0;

    double avg() const { return (mu + afe + cfe) / 3.0; }
};

/// Rounds half away from zero to 4 decimals, as printed in the grid.
double round4(double x);

std::string render_grid_csv(std::span<const GridRow> rows);
std::string render_grid_text(std::span<const GridRow> rows);

}  // namespace cotforget
