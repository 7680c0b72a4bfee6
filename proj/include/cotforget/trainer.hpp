// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/checkpoint.hpp"
#include "cotforget/objectives.hpp"

namespace cotforget {

struct UnlearnRunConfig {
    Method method = Method::ga;
    Strategy strategy = Strategy::cot_only;
    std::optional<IdkVariant> po_variant;  // required when method == po
    std::string forget_scale = "forget01";
    double lr = 1e-5;
    double weight_decay = 0.01;
    int effective_batch = 32;
    int micro_batch = 8;
    int max_epochs = 5;
    double mu_floor = 0.6;
    std::uint64_t seed = 0;
    std::string model_id;
    bool kl_response_only = true;
    Strategy po_retain_strategy = Strategy::cot_and_answer;
    int max_len = 256;

    /// 1e-5 for forget01, 2e-6 for forget05 and forget10.
    static double default_lr(const std::string& scale);
    /// 0.01, 0.05 or 0.10.
    static double fraction_of(const std::string& scale);

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static UnlearnRunConfig from_json(const nlohmann::json& j);
    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    std::string hash() const;
    std::string label() const;  // e.g. "ga/cot_only/forget01"
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown losses;  // step-averaged terms
    double mu = 0.0;
    double afe = 0.0;
    double cfe = 0.0;
    double lr_at_end = 0.0;
    std::string checkpoint_ref;
    nlohmann::json extra;  // evaluator payload (e.g. forget step-wise ROUGE)

    nlohmann::json to_json() const;
    static EpochRecord from_json(const nlohmann::json& j);
};

struct EpochScores {
    double mu = 0.0;
    double afe = 0.0;
    double cfe = 0.0;
    nlohmann::json extra;
};

/// Called after every epoch with the saved checkpoint.
using EpochEvaluator = std::function<EpochScores(int epoch, const LanguageModel& model, const std::string& ckpt_dir)>;

struct FinetuneOptions {
    int epochs = 10;
    double lr = 1e-5;
    int batch_size = 32;
    int micro_batch = 8;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    int max_len = 256;
    std::string last_good_dir;  // where a diverged run leaves its last good weights
};

struct FinetuneResult {
    LanguageModel model;
    std::vector<double> epoch_losses;
};

/// Minimizes NLL over every assistant-turn token (delimiters, think, answer,
/// EOS) with AdamW at a constant LR.
/// epochs == 0 returns the input unchanged.
FinetuneResult finetune_target(const LanguageModel& init, std::span<const ReasoningExample> data,
                               const FinetuneOptions& options);

struct UnlearnInputs {
    std::vector<ReasoningExample> forget;
    std::vector<ReasoningExample> retain;
    const IdkVariantSpec* idk = nullptr;   // required for po
    const LanguageModel* frozen = nullptr;  // required for kl
};

struct UnlearnTrace {
    std::vector<double> lr_per_step;
    std::vector<LossBreakdown> step_losses;
    long steps_per_epoch = 0;
    std::string frozen_hash_before;
    std::string frozen_hash_after;
};

/// Runs the unlearning loop. Writes `run.json`, `epoch0/` (the target), one
/// `epoch<k>/` per finished epoch and `records.json` after every epoch, so an
/// aborted run keeps its completed records.
std::vector<EpochRecord> run_unlearning(const UnlearnRunConfig& cfg, const LanguageModel& target,
                                        const UnlearnInputs& inputs, const std::string& run_dir,
                                        const EpochEvaluator& evaluate, UnlearnTrace* trace = nullptr);

std::vector<EpochRecord> load_records(const std::string& run_dir);

/// Largest epoch e with mu >= floor for every epoch up to e. When the first
/// epoch is already below the floor, returns it and sets `warning`.
int select_report_epoch(std::span<const EpochRecord> records, double mu_floor, bool* warning = nullptr);
int select_report_epoch(std::span<const double> mu_series, double mu_floor, bool* warning = nullptr);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace cotforget
