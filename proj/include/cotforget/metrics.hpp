// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/construction.hpp"
#include "cotforget/corpus.hpp"
#include "cotforget/decoding.hpp"
#include "cotforget/llm.hpp"

namespace cotforget {

size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS(reference, candidate) / |reference| over metric tokens; 0 for an empty reference.
double rouge_l_recall(std::string_view reference, std::string_view candidate);

/// Unigram Shannon entropy over metric tokens divided by ln(count); 0 for <= 1 token.
double token_entropy(std::string_view text);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

/// Feature-hashed bag of metric tokens. Offline stand-in for a sentence encoder.
class HashedBowEmbedder : public EmbeddingProvider {
public:
    explicit HashedBowEmbedder(size_t dim = 1024) : dim_(dim) {}
    std::string id() const override { return "local/hashed-bow-" + std::to_string(dim_); }
    std::vector<double> embed(const std::string& text) override;

private:
    size_t dim_;
};

/// OpenAI-compatible `POST {base_url}/embeddings`.
std::unique_ptr<EmbeddingProvider> make_http_embedder(const EndpointConfig& cfg);

enum class NliLabel { entailment, neutral, contradiction };

std::string_view to_string(NliLabel l);
NliLabel nli_label_from_string(std::string_view s);

class NliProvider {
public:
    virtual ~NliProvider() = default;
    virtual std::string id() const = 0;
    virtual NliLabel classify(const std::string& premise, const std::string& hypothesis) = 0;
};

/// Entailment when the hypothesis is mostly recovered (ROUGE-L recall) from
/// the premise. Offline stand-in for an NLI classifier.
class LexicalNli : public NliProvider {
public:
    explicit LexicalNli(double threshold = 0.6) : threshold_(threshold) {}
    std::string id() const override { return "local/lexical-nli"; }
    NliLabel classify(const std::string& premise, const std::string& hypothesis) override;

private:
    double threshold_;
};

/// `POST {base_url}/nli` with {"premise","hypothesis"}, reply {"label": ...}.
std::unique_ptr<NliProvider> make_http_nli(const EndpointConfig& cfg);

/// A chat transport that answers judge prompts locally with the ROUGE-L recall
/// of the forgotten knowledge inside the generated CoT.
std::shared_ptr<ChatTransport> make_overlap_judge_transport(const PromptTemplate& judge_template);

/// max(0, cos(embed(a), embed(b))). Byte-identical texts score 1.
double cosine_similarity(const std::string& before, const std::string& after, EmbeddingProvider& embedder);
double cosine(std::span<const double> a, std::span<const double> b);

/// Fraction of (output, truth) pairs labeled entailment, premise = output.
double entailment_score(std::span<const std::string> outputs, std::span<const std::string> truths,
                        NliProvider& nli);

enum class StepMetric { rouge, cosine };

struct StepPair {
    int gt_index = 0;
    int gen_index = -1;  // -1 when unmatched
    double score = 0.0;
};

struct StepAlignment {
    std::vector<StepPair> pairs;  // one per ground-truth step
    StepMetric metric = StepMetric::rouge;
};

struct StepwiseResult {
    double score = 0.0;
    StepAlignment alignment;
};

/// Mean over ground-truth steps of the best generated-step score. Greedy
/// alignment lets generated steps repeat; `one_to_one` solves the assignment
/// problem instead. `embedder` is required for StepMetric::cosine.
StepwiseResult stepwise_score(std::span<const std::string> gt_steps, std::span<const std::string> gen_steps,
                              StepMetric metric, EmbeddingProvider* embedder = nullptr, bool one_to_one = false);

/// Parses a judge reply; nullopt unless the whole trimmed reply is a number in [0,1].
std::optional<double> parse_judge_reply(const std::string& reply);

/// Fills the judge template, re-asks once with a reminder, then ScoringError.
double judge_score(const std::string& question, const std::string& truth_answer, const std::string& generated_cot,
                   PromptClient& judge);

struct ExampleScores {
    std::optional<double> rouge, te, cs, es, sw_rouge, sw_cs, judge;

    nlohmann::json to_json() const;
    static ExampleScores from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kMetricNames[] = {"rouge", "te", "cs", "es", "sw_rouge", "sw_cs", "judge"};

struct SetReport {
    std::map<std::string, ExampleScores> per_example;
    std::map<std::string, double> per_set;
    long judge_unscored = 0;

    /// Arithmetic means of the fields present in per_example.
    void recompute_means();
};

struct MetricReport {
    std::map<std::string, SetReport> sets;  // real_authors, world_facts, retain, forget
    std::map<std::string, std::string> provenance;
    std::string mode;

    const SetReport& set(std::string_view name) const;
    /// Per-set mean; throws ValidationError naming the missing component.
    double mean(std::string_view set_name, std::string_view metric) const;

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

struct EvalSets {
    std::vector<ReasoningExample> real_authors, world_facts, retain, forget;

    static EvalSets from_corpus(const Corpus& corpus, size_t subset = 0);
};

/// Pre-unlearning target outputs keyed by (mode, id).
struct BaselineOutputs {
    std::map<std::string, std::map<std::string, GenerationResult>> by_mode;

    const GenerationResult* find(std::string_view mode, std::string_view id) const;
    void save(const std::string& path) const;
    static BaselineOutputs load(const std::string& path);
};

BaselineOutputs snapshot_baseline(const LanguageModel& target, const EvalSets& sets,
                                  std::span<const ThinkMode> modes, const DecodeParams& params);

struct Providers {
    EmbeddingProvider* embedder = nullptr;
    NliProvider* nli = nullptr;
    PromptClient* judge = nullptr;  // null skips judging
};

struct EvalOptions {
    DecodeParams decode;
    bool one_to_one_steps = false;
    bool forget_only = false;  // skip the three utility sets
};

/// Generates for every example of each set under `mode` and scores it. CS is
/// against the baseline output for the same prompt and mode.
MetricReport evaluate_checkpoint(const LanguageModel& lm, const EvalSets& sets, const BaselineOutputs& baseline,
                                 const Providers& providers, const ThinkMode& mode, const EvalOptions& options,
                                 std::map<std::string, GenerationResult>* generations = nullptr);

}  // namespace cotforget
