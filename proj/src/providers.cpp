// SPDX-License-Identifier: Apache-2.0
#include <cctype>
#include <cmath>
#include <cstdio>

#include "cotforget/error.hpp"
#include "cotforget/metrics.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Scores judge prompts by the ROUGE-L recall of the answer inside the CoT.
class OverlapJudgeTransport final : public ChatTransport {
public:
    explicit OverlapJudgeTransport(PromptTemplate judge) : judge_(std::move(judge)) {}

    std::string send(const EndpointConfig&, const std::string& prompt) override {
        const auto fields = match_template(judge_, prompt);
        if (!fields || !fields->count("answer") || !fields->count("cot_after")) {
            throw TransportFailure{"overlap judge: prompt does not follow the judge template", false};
        }
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.2f", rouge_l_recall(fields->at("answer"), fields->at("cot_after")));
        return buf;
    }

private:
    PromptTemplate judge_;
};

}  // namespace

std::vector<double> HashedBowEmbedder::embed(const std::string& text) {
    std::vector<double> v(dim_, 0.0);
    for (const auto& tok : metric_tokens(text)) v[fnv1a(tok) % dim_] += 1.0;
    return v;
}

std::string_view to_string(NliLabel l) {
    switch (l) {
        case NliLabel::entailment: return "entailment";
        case NliLabel::neutral: return "neutral";
        case NliLabel::contradiction: return "contradiction";
    }
    return "?";
}

NliLabel nli_label_from_string(std::string_view s) {
    std::string lower(s);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "entailment") return NliLabel::entailment;
    if (lower == "neutral") return NliLabel::neutral;
    if (lower == "contradiction") return NliLabel::contradiction;
    throw ValidationError("unknown NLI label: " + std::string(s));
}

NliLabel LexicalNli::classify(const std::string& premise, const std::string& hypothesis) {
    return rouge_l_recall(hypothesis, premise) >= threshold_ ? NliLabel::entailment : NliLabel::neutral;
}

std::shared_ptr<ChatTransport> make_overlap_judge_transport(const PromptTemplate& judge_template) {
    return std::make_shared<OverlapJudgeTransport>(judge_template);
}

}  // namespace cotforget
