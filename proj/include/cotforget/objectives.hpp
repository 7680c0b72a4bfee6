// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/construction.hpp"
#include "cotforget/corpus.hpp"
#include "cotforget/model.hpp"
#include "cotforget/segmentation.hpp"

namespace cotforget {

enum class Method { ga, gd, kl, po };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

/// A rendered example plus the loss mask chosen for it.
struct TrainSequence {
    RenderedExample rendered;
    SegmentMask mask;
};

TrainSequence make_sequence(const ReasoningExample& ex, Strategy strategy, const ChatTemplate& tmpl,
                            const Tokenizer& tok, int max_len);

/// Mean negative log-likelihood over target positions t with mask[t] set,
/// scored by logits row t-1. When `dlogits` is given, adds scale * d(nll)/d(logits).
/// Throws EmptyMaskError for an all-false mask.
double masked_nll(const Mat& logits, std::span<const int> targets, const std::vector<bool>& mask,
                  Mat* dlogits = nullptr, double scale = 1.0);

/// KL(p || q) between two logit rows given as softmax inputs.
double kl_divergence(const Eigen::Ref<const Eigen::RowVectorXd>& p_logits,
                     const Eigen::Ref<const Eigen::RowVectorXd>& q_logits);

struct LossBreakdown {
    Method method = Method::ga;
    double forget_term = 0.0;
    double retain_term = 0.0;
    double kl_term = 0.0;
    double total = 0.0;
    long forget_tokens = 0;
    long retain_tokens = 0;
    long kl_tokens = 0;
    std::vector<double> forget_per_sequence;
    std::vector<long> forget_tokens_per_sequence;

    /// The method's formula applied to the stored terms.
    double recompose() const;
    nlohmann::json to_json() const;
};

enum class LossRole { forget, retain, kl };

/// Where gradients go. `grad` accumulates scale * d(total)/d(params); the
/// observer sees each sequence's d(total)/d(logits) before backpropagation.
struct GradientSink {
    std::span<double> grad;
    double scale = 1.0;
    std::function<void(LossRole, size_t, const Mat&)> observer;
};

struct KlOptions {
    /// Score only think+answer target positions of retain sequences. When
    /// false, every position from the second token on is scored.
    bool response_only = true;
};

/// Mean over sequences of masked NLL; gradient of +mean goes to `sink`.
double batch_nll(std::span<const TrainSequence> batch, const TinyLM& model, GradientSink* sink = nullptr,
                 long* tokens = nullptr);

LossBreakdown ga_loss(std::span<const TrainSequence> forget, const TinyLM& model, GradientSink* sink = nullptr);
LossBreakdown gd_loss(std::span<const TrainSequence> forget, std::span<const TrainSequence> retain,
                      const TinyLM& model, GradientSink* sink = nullptr);
/// `frozen` is the pre-unlearning target; null raises ConfigError.
LossBreakdown kl_loss(std::span<const TrainSequence> forget, std::span<const TrainSequence> retain,
                      const TinyLM& model, const TinyLM* frozen, GradientSink* sink = nullptr,
                      const KlOptions& options = {});
/// `forget_idk` sequences carry the mask rule from build_idk_dataset.
LossBreakdown po_loss(std::span<const TrainSequence> retain, std::span<const TrainSequence> forget_idk,
                      const TinyLM& model, GradientSink* sink = nullptr);

enum class IdkVariant { answer_idk, direct_idk, reasoned_idk };

std::string_view to_string(IdkVariant v);
IdkVariant idk_variant_from_string(std::string_view s);

struct IdkVariantSpec {
    IdkVariant variant = IdkVariant::answer_idk;
    std::vector<std::string> idk_pool;
    std::map<std::string, std::string> reasoned_traces;  // forget id -> hesitant trace

    void validate(std::span<const ReasoningExample> forget) const;
};

struct IdkExample {
    ReasoningExample example;
    Strategy mask_rule = Strategy::answer_only;
};

/// answer_idk replaces the answer (mask answer_only); direct_idk replaces cot
/// and answer with refusals; reasoned_idk uses the stored hesitant trace as cot
/// and a refusal as answer (both cot_and_answer). Refusals are drawn per
/// example from the pool with `seed`.
std::vector<IdkExample> build_idk_dataset(std::span<const ReasoningExample> forget, const IdkVariantSpec& spec,
                                          std::uint64_t seed);

/// Hesitant, answer-free trace for a forget question. A trace containing
/// `forbidden_answer` is regenerated once, then FormatError.
std::string generate_reasoned_idk(const std::string& question, const std::string& forbidden_answer,
                                  PromptClient& client, const std::string& think_open,
                                  const std::string& think_close, FieldProvenance* provenance = nullptr);

}  // namespace cotforget
