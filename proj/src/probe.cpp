// SPDX-License-Identifier: Apache-2.0
#include "cotforget/probe.hpp"

#include <cstdio>
#include <filesystem>
#include <map>

#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/plot.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

ProbeResult probe_decoding(std::span<const std::pair<int, std::string>> checkpoints,
                           std::span<const ReasoningExample> forget, std::span<const ThinkMode> modes,
                           EmbeddingProvider& embedder, const DecodeParams& params) {
    if (modes.empty()) throw ValidationError("probe_decoding: no think modes given");
    if (checkpoints.empty() || checkpoints.front().first != 0 || !is_checkpoint(checkpoints.front().second)) {
        throw ValidationError("probe_decoding: the epoch-0 target checkpoint is required");
    }
    if (forget.empty()) throw ValidationError("probe_decoding: empty forget set");

    ProbeResult res;
    std::map<std::string, std::map<std::string, std::string>> reference;  // mode -> id -> target answer
    for (const auto& [epoch, dir] : checkpoints) {
        if (!is_checkpoint(dir)) {
            log::warn("probe: epoch " + std::to_string(epoch) + " checkpoint missing at " + dir);
            res.missing_epochs.push_back(epoch);
            for (const auto& m : modes) res.points.push_back({m.name(), epoch, std::nullopt, std::nullopt});
            continue;
        }
        const auto lm = load_checkpoint(dir);
        for (const auto& m : modes) {
            double rouge = 0.0, cs = 0.0;
            for (const auto& ex : forget) {
                const auto gen = generate(lm, ex.question, m, params);
                if (epoch == 0) reference[m.name()][ex.id] = gen.answer;
                rouge += rouge_l_recall(ex.answer, gen.answer);
                cs += cosine_similarity(reference[m.name()].at(ex.id), gen.answer, embedder);
            }
            const auto n = static_cast<double>(forget.size());
            res.points.push_back({m.name(), epoch, rouge / n, cs / n});
        }
    }
    return res;
}

void write_probe_outputs(const ProbeResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::string csv = "mode,epoch,rouge,cs\n";
    auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string(buf);
    };
    std::map<std::string, Series> rouge, cs;
    std::vector<std::string> order;
    for (const auto& p : result.points) {
        csv += p.mode + "," + std::to_string(p.epoch) + "," + fmt(p.rouge) + "," + fmt(p.cs) + "\n";
        if (!rouge.count(p.mode)) {
            order.push_back(p.mode);
            rouge[p.mode].name = cs[p.mode].name = p.mode;
        }
        rouge[p.mode].points.emplace_back(p.epoch, p.rouge);
        cs[p.mode].points.emplace_back(p.epoch, p.cs);
    }
    write_file_atomic(out_dir + "/curves.csv", csv);
    std::vector<Series> rs, cv;
    for (const auto& m : order) {
        rs.push_back(rouge[m]);
        cv.push_back(cs[m]);
    }
    write_file_atomic(out_dir + "/rouge.svg", line_chart_svg("Forget answer ROUGE by decoding mode", "epoch", "ROUGE", rs));
    write_file_atomic(out_dir + "/cs.svg", line_chart_svg("Forget answer CS by decoding mode", "epoch", "CS", cv));
}

}  // namespace cotforget
