// SPDX-License-Identifier: Apache-2.0
#include "cotforget/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cotforget/error.hpp"

namespace cotforget {

double harmonic_mean(std::span<const double> values, double epsilon) {
    if (values.empty()) throw ValidationError("harmonic_mean of an empty list");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ValidationError("harmonic_mean epsilon must be in (0,1]");
    double inv_sum = 0.0;
    for (double v : values) {
        if (std::isnan(v)) throw ValidationError("harmonic_mean input is NaN");
        inv_sum += 1.0 / std::clamp(v, epsilon, 1.0);
    }
    return static_cast<double>(values.size()) / inv_sum;
}

double invert(double score) {
    if (!(score >= 0.0 && score <= 1.0)) throw ValidationError("invert: score outside [0,1]");
    return 1.0 - score;
}

namespace {

double combine(const MetricReport& report, std::span<const std::string_view> sets,
               std::span<const std::string_view> metrics, bool inverted, double epsilon,
               std::map<std::string, Component>* components) {
    std::vector<double> used;
    for (auto set : sets) {
        for (auto metric : metrics) {
            const double raw = report.mean(set, metric);
            const double u = inverted ? invert(raw) : raw;
            used.push_back(u);
            if (components) (*components)[std::string(set) + "." + std::string(metric)] = {raw, u, inverted};
        }
    }
    return harmonic_mean(used, epsilon);
}

constexpr std::string_view kUtilitySets[] = {"real_authors", "world_facts", "retain"};
constexpr std::string_view kForgetSet[] = {"forget"};
constexpr std::string_view kUtilityMetrics[] = {"rouge", "cs", "te", "es"};
constexpr std::string_view kAnswerForgetMetrics[] = {"rouge", "cs", "es"};
constexpr std::string_view kCotForgetMetrics[] = {"sw_rouge", "sw_cs", "judge"};

}  // namespace

double compute_mu(const MetricReport& report, double epsilon, std::map<std::string, Component>* components) {
    return combine(report, kUtilitySets, kUtilityMetrics, false, epsilon, components);
}

double compute_afe(const MetricReport& report, double epsilon, std::map<std::string, Component>* components) {
    return combine(report, kForgetSet, kAnswerForgetMetrics, true, epsilon, components);
}

double compute_cfe(const MetricReport& report, double epsilon, std::map<std::string, Component>* components) {
    return combine(report, kForgetSet, kCotForgetMetrics, true, epsilon, components);
}

AggregateScores aggregate(const MetricReport& report, double epsilon) {
    AggregateScores a;
    a.epsilon = epsilon;
    a.mu = compute_mu(report, epsilon, &a.components);
    a.afe = compute_afe(report, epsilon, &a.components);
    a.cfe = compute_cfe(report, epsilon, &a.components);
    return a;
}

nlohmann::json AggregateScores::to_json() const {
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& [k, c] : components) comps[k] = {{"raw", c.raw}, {"used", c.used}, {"inverted", c.inverted}};
    return {{"mu", mu}, {"afe", afe}, {"cfe", cfe}, {"avg", avg()}, {"epsilon", epsilon}, {"components", comps}};
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

namespace {

std::string fmt4(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", round4(x));
    return buf;
}

}  // namespace

std::string render_grid_csv(std::span<const GridRow> rows) {
    std::string out = "method,strategy,scale,epoch,mu,afe,cfe,avg\n";
    for (const auto& r : rows) {
        out += r.method + "," + r.strategy + "," + r.scale + "," + std::to_string(r.epoch) + "," + fmt4(r.mu) + "," +
               fmt4(r.afe) + "," + fmt4(r.cfe) + "," + fmt4(r.avg()) + "\n";
    }
    return out;
}

std::string render_grid_text(std::span<const GridRow> rows) {
    const std::vector<std::string> header{"method", "strategy", "scale", "epoch", "MU", "AFE", "CFE", "Avg."};
    std::vector<std::vector<std::string>> cells{header};
    for (const auto& r : rows) {
        cells.push_back({r.method, r.strategy, r.scale, std::to_string(r.epoch), fmt4(r.mu), fmt4(r.afe),
                         fmt4(r.cfe), fmt4(r.avg())});
    }
    std::vector<size_t> width(header.size(), 0);
    for (const auto& row : cells) {
        for (size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    std::string out;
    for (size_t r = 0; r < cells.size(); ++r) {
        for (size_t i = 0; i < cells[r].size(); ++i) {
            const auto& c = cells[r][i];
            const bool numeric = i >= 3;
            const std::string pad(width[i] - c.size(), ' ');
            out += (i ? "  " : "") + (numeric ? pad + c : c + pad);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += "\n";
        if (r == 0) {
            size_t total = 0;
            for (auto w : width) total += w;
            out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
        }
    }
    return out;
}

}  // namespace cotforget
