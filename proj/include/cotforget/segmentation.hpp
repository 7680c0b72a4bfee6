// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/corpus.hpp"
#include "cotforget/tokenizer.hpp"

namespace cotforget {

/// Chat wrapper strings. Every non-empty string becomes one special token.
struct ChatTemplate {
    std::string user_prefix = "<|User|>";
    std::string user_suffix;
    std::string assistant_prefix = "<|Assistant|>";
    std::string think_open = "<think>";
    std::string think_close = "</think>";
    std::string eos = "<|end|>";
    bool delimiters_in_think_span = true;

    std::vector<std::string> specials() const;
    nlohmann::json to_json() const;
    static ChatTemplate from_json(const nlohmann::json& j);
    bool operator==(const ChatTemplate&) const = default;
};

enum class SpanKind { prompt, think, answer };

/// Half-open token range [start, end).
struct SegmentSpan {
    SpanKind kind = SpanKind::prompt;
    int start = 0;
    int end = 0;

    int size() const noexcept { return end - start; }
    bool empty() const noexcept { return end == start; }
    bool contains(int i) const noexcept { return i >= start && i < end; }
};

struct RenderedExample {
    std::string id;
    std::vector<int> tokens;
    SegmentSpan prompt{SpanKind::prompt, 0, 0};
    SegmentSpan think{SpanKind::think, 0, 0};
    SegmentSpan answer{SpanKind::answer, 0, 0};

    std::array<SegmentSpan, 3> spans() const { return {prompt, think, answer}; }
    int length() const noexcept { return static_cast<int>(tokens.size()); }
};

enum class Strategy { cot_and_answer, answer_only, cot_only };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct SegmentMask {
    Strategy strategy = Strategy::cot_and_answer;
    std::vector<bool> mask;  // one flag per token position

    int popcount() const;
};

/// Tokens of the user turn and the assistant prefix, ready for generation.
std::vector<int> render_prompt(std::string_view question, const ChatTemplate& tmpl, const Tokenizer& tok);

/// Prompt, think and answer segments with their token spans. The think span
/// holds the delimiters (per template flag) and the answer span holds the EOS
/// token, but only when their text is non-empty; an empty field gives an empty
/// span. Throws TruncationError when the sequence exceeds `max_len`.
RenderedExample render_example(const ReasoningExample& ex, const ChatTemplate& tmpl, const Tokenizer& tok,
                               int max_len);

/// cot_and_answer = think ∪ answer, answer_only = answer, cot_only = think.
/// Throws EmptyMaskError when the selected spans are empty.
SegmentMask build_mask(std::span<const SegmentSpan> spans, Strategy strategy, int seq_len);

inline SegmentMask build_mask(const RenderedExample& ex, Strategy strategy) {
    const auto spans = ex.spans();
    return build_mask(spans, strategy, ex.length());
}

}  // namespace cotforget
