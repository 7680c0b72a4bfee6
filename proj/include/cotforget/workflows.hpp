// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/aggregation.hpp"
#include "cotforget/checkpoint.hpp"
#include "cotforget/config.hpp"
#include "cotforget/corpus.hpp"
#include "cotforget/manifest.hpp"
#include "cotforget/trainer.hpp"

namespace cotforget {

/// Tokenizer built from the corpus text plus a randomly initialized model.
LanguageModel init_model(const Corpus& corpus, const Config& cfg);

/// Mean answer ROUGE per split under default decoding.
std::map<std::string, double> answer_rouge_by_split(const LanguageModel& lm, const Corpus& corpus,
                                                    const DecodeParams& params, size_t subset = 0);

struct FinetuneSummary {
    LanguageModel model;
    std::vector<double> epoch_losses;
    std::map<std::string, double> rouge_before;
    std::map<std::string, double> rouge_after;
    nlohmann::json to_json() const;
};

/// Trains on the forget/retain examples (and the utility sets when
/// `finetune.include_utility_sets` is set) and measures answer ROUGE before and after.
FinetuneSummary run_finetune(const LanguageModel& init, const Corpus& corpus, const Config& cfg,
                             const std::string& out_dir);

UnlearnRunConfig unlearn_config_from(const Config& cfg);

struct UnlearnSummary {
    std::string run_dir;
    std::vector<EpochRecord> records;
    int selected_epoch = 0;
    bool selection_warning = false;
    RunManifest manifest;
    nlohmann::json to_json() const;
};

/// Split, baseline snapshot, unlearning with per-epoch evaluation and
/// aggregation, epoch selection. Everything lands in `<runs_dir>/<cfg-hash>/`.
UnlearnSummary run_unlearn(const Config& cfg, const Corpus& corpus, const LanguageModel& target,
                           const std::string& runs_dir);

/// Scores one checkpoint against a baseline snapshot; writes report.json and aggregate.json.
nlohmann::json run_evaluate(const Config& cfg, const LanguageModel& lm, const Corpus& corpus,
                            const std::string& baseline_path, const std::string& out_dir);

/// Decoding probe over every epoch checkpoint of a run directory.
nlohmann::json run_probe(const Config& cfg, const std::string& run_dir, const std::vector<std::string>& modes,
                         const std::string& out_dir);

/// Grid of the selected epoch of each run; writes grid.csv and grid.txt.
nlohmann::json run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                          std::optional<double> mu_floor = std::nullopt);

void write_summary(const std::string& out_dir, const nlohmann::json& summary);

}  // namespace cotforget
