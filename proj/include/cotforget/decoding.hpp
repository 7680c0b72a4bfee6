// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/checkpoint.hpp"

namespace cotforget {

enum class ThinkModeKind { default_think, zero_think, less_think };

std::string_view to_string(ThinkModeKind k);
/// Accepts "default"/"zero"/"less" and the long forms "default_think" etc.
ThinkModeKind think_mode_from_string(std::string_view s);

inline constexpr std::string_view kDefaultLessThinkPhrase =
    "Okay, the user asked this question, and I can answer it without thinking much.";

struct ThinkMode {
    ThinkModeKind kind = ThinkModeKind::default_think;
    std::string prefill;  // text forced at the head of the assistant turn

    /// zero: open+close; less: open+phrase+close; default: empty.
    static ThinkMode make(ThinkModeKind kind, const ChatTemplate& tmpl,
                          std::string_view less_phrase = kDefaultLessThinkPhrase);
    std::string name() const { return std::string(to_string(kind)); }
};

struct DecodeParams {
    int max_new_tokens = 128;
    double temperature = 0.0;  // 0 = greedy
    std::uint64_t seed = 0;
};

struct GenerationResult {
    std::string cot;
    std::string answer;
    std::string raw;  // prefill + continuation, EOS excluded, invalid UTF-8 replaced
    ThinkModeKind mode = ThinkModeKind::default_think;
    std::string prefill;
    bool truncated = false;  // no close delimiter
    bool hit_eos = false;

    nlohmann::json to_json() const;
    static GenerationResult from_json(const nlohmann::json& j);
};

/// Prompt tokens followed by the mode's prefill tokens.
std::vector<int> apply_think_mode(std::span<const int> prompt, const ThinkMode& mode, const ChatTemplate& tmpl,
                                  const Tokenizer& tok);

/// Splits raw text at the first close delimiter. The cot is the text between
/// the preceding open delimiter and the close; without a close delimiter the
/// cot runs to the end, the answer is empty and `truncated` is set.
GenerationResult parse_generation(const std::string& raw, const ThinkMode& mode, const ChatTemplate& tmpl);

GenerationResult generate(const LanguageModel& lm, std::string_view question, const ThinkMode& mode,
                          const DecodeParams& params);

/// Replaces invalid UTF-8 so generated text can go into JSON.
std::string sanitize_utf8(const std::string& s);

}  // namespace cotforget
