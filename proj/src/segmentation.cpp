// SPDX-License-Identifier: Apache-2.0
#include "cotforget/segmentation.hpp"

#include <algorithm>

#include "cotforget/error.hpp"

namespace cotforget {

std::vector<std::string> ChatTemplate::specials() const {
    std::vector<std::string> out;
    for (const auto* s : {&user_prefix, &user_suffix, &assistant_prefix, &think_open, &think_close, &eos}) {
        if (!s->empty()) out.push_back(*s);
    }
    return out;
}

nlohmann::json ChatTemplate::to_json() const {
    return {{"user_prefix", user_prefix}, {"user_suffix", user_suffix}, {"assistant_prefix", assistant_prefix},
            {"think_open", think_open},   {"think_close", think_close}, {"eos", eos},
            {"delimiters_in_think_span", delimiters_in_think_span}};
}

ChatTemplate ChatTemplate::from_json(const nlohmann::json& j) {
    ChatTemplate t;
    t.user_prefix = j.value("user_prefix", t.user_prefix);
    t.user_suffix = j.value("user_suffix", t.user_suffix);
    t.assistant_prefix = j.value("assistant_prefix", t.assistant_prefix);
    t.think_open = j.value("think_open", t.think_open);
    t.think_close = j.value("think_close", t.think_close);
    t.eos = j.value("eos", t.eos);
    t.delimiters_in_think_span = j.value("delimiters_in_think_span", t.delimiters_in_think_span);
    if (t.eos.empty()) throw ConfigError("chat template needs an eos string");
    return t;
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::cot_and_answer: return "cot_and_answer";
        case Strategy::answer_only: return "answer_only";
        case Strategy::cot_only: return "cot_only";
    }
    return "cot_and_answer";
}

Strategy strategy_from_string(std::string_view s) {
    if (s == "cot_and_answer") return Strategy::cot_and_answer;
    if (s == "answer_only") return Strategy::answer_only;
    if (s == "cot_only") return Strategy::cot_only;
    throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

int SegmentMask::popcount() const { return static_cast<int>(std::count(mask.begin(), mask.end(), true)); }

namespace {

void push_special(std::vector<int>& out, const Tokenizer& tok, const std::string& s) {
    if (!s.empty()) out.push_back(tok.special_id(s));
}

void append(std::vector<int>& out, const std::vector<int>& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

std::vector<int> render_prompt(std::string_view question, const ChatTemplate& tmpl, const Tokenizer& tok) {
    std::vector<int> ids;
    push_special(ids, tok, tmpl.user_prefix);
    append(ids, tok.encode(question));
    push_special(ids, tok, tmpl.user_suffix);
    push_special(ids, tok, tmpl.assistant_prefix);
    return ids;
}

RenderedExample render_example(const ReasoningExample& ex, const ChatTemplate& tmpl, const Tokenizer& tok,
                               int max_len) {
    if (tmpl.think_open.empty() || tmpl.think_close.empty()) {
        throw ConfigError("chat template must define think delimiters");
    }
    RenderedExample r;
    r.id = ex.id;
    r.tokens = render_prompt(ex.question, tmpl, tok);
    const int prompt_end = r.length();
    r.prompt = {SpanKind::prompt, 0, prompt_end};

    const auto cot_ids = tok.encode(ex.cot);
    const int open_pos = r.length();
    r.tokens.push_back(tok.special_id(tmpl.think_open));
    append(r.tokens, cot_ids);
    r.tokens.push_back(tok.special_id(tmpl.think_close));
    const int think_end = r.length();
    if (cot_ids.empty()) {
        r.think = {SpanKind::think, think_end, think_end};
    } else if (tmpl.delimiters_in_think_span) {
        r.think = {SpanKind::think, open_pos, think_end};
    } else {
        r.think = {SpanKind::think, open_pos + 1, think_end - 1};
    }

    const auto answer_ids = tok.encode(ex.answer);
    append(r.tokens, answer_ids);
    r.tokens.push_back(tok.special_id(tmpl.eos));
    const int end = r.length();
    r.answer = answer_ids.empty() ? SegmentSpan{SpanKind::answer, end, end} : SegmentSpan{SpanKind::answer, think_end, end};

    if (r.length() > max_len) {
        throw TruncationError("example '" + ex.id + "' renders to " + std::to_string(r.length()) +
                              " tokens, over the limit of " + std::to_string(max_len));
    }
    return r;
}

SegmentMask build_mask(std::span<const SegmentSpan> spans, Strategy strategy, int seq_len) {
    SegmentMask m{strategy, std::vector<bool>(static_cast<size_t>(seq_len), false)};
    for (const auto& s : spans) {
        if (s.start < 0 || s.end < s.start || s.end > seq_len) throw ValidationError("span outside sequence");
        const bool on = (s.kind == SpanKind::think && strategy != Strategy::answer_only) ||
                        (s.kind == SpanKind::answer && strategy != Strategy::cot_only);
        if (!on) continue;
        for (int i = s.start; i < s.end; ++i) m.mask[static_cast<size_t>(i)] = true;
    }
    if (m.popcount() == 0) {
        throw EmptyMaskError("strategy " + std::string(to_string(strategy)) + " selects no tokens");
    }
    return m;
}

}  // namespace cotforget
