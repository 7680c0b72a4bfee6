// SPDX-License-Identifier: Apache-2.0
#include "cotforget/decoding.hpp"

#include <cmath>
#include <random>

#include "cotforget/error.hpp"

namespace cotforget {

std::string_view to_string(ThinkModeKind k) {
    switch (k) {
        case ThinkModeKind::default_think: return "default_think";
        case ThinkModeKind::zero_think: return "zero_think";
        case ThinkModeKind::less_think: return "less_think";
    }
    return "?";
}

ThinkModeKind think_mode_from_string(std::string_view s) {
    if (s == "default" || s == "default_think") return ThinkModeKind::default_think;
    if (s == "zero" || s == "zero_think") return ThinkModeKind::zero_think;
    if (s == "less" || s == "less_think") return ThinkModeKind::less_think;
    throw ValidationError("unknown think mode: " + std::string(s));
}

ThinkMode ThinkMode::make(ThinkModeKind kind, const ChatTemplate& tmpl, std::string_view less_phrase) {
    ThinkMode m{kind, {}};
    if (kind == ThinkModeKind::default_think) return m;
    if (tmpl.think_open.empty() || tmpl.think_close.empty()) {
        throw ConfigError("think mode " + std::string(to_string(kind)) + " needs template think delimiters");
    }
    m.prefill = tmpl.think_open;
    if (kind == ThinkModeKind::less_think) m.prefill += less_phrase;
    m.prefill += tmpl.think_close;
    return m;
}

nlohmann::json GenerationResult::to_json() const {
    return {{"mode", to_string(mode)}, {"prefill", prefill},     {"raw", sanitize_utf8(raw)},
            {"cot", sanitize_utf8(cot)}, {"answer", sanitize_utf8(answer)}, {"truncated", truncated},
            {"hit_eos", hit_eos}};
}

GenerationResult GenerationResult::from_json(const nlohmann::json& j) {
    GenerationResult g;
    g.mode = think_mode_from_string(j.at("mode").get<std::string>());
    g.prefill = j.value("prefill", "");
    g.raw = j.value("raw", "");
    g.cot = j.value("cot", "");
    g.answer = j.value("answer", "");
    g.truncated = j.value("truncated", false);
    g.hit_eos = j.value("hit_eos", false);
    return g;
}

std::vector<int> apply_think_mode(std::span<const int> prompt, const ThinkMode& mode, const ChatTemplate& tmpl,
                                  const Tokenizer& tok) {
    std::vector<int> ids(prompt.begin(), prompt.end());
    if (mode.kind == ThinkModeKind::default_think) return ids;
    if (tmpl.think_open.empty() || tmpl.think_close.empty()) {
        throw ConfigError("think mode " + mode.name() + " needs template think delimiters");
    }
    const auto& open = tmpl.think_open;
    const auto& close = tmpl.think_close;
    if (mode.prefill.size() < open.size() + close.size() || mode.prefill.compare(0, open.size(), open) != 0 ||
        mode.prefill.compare(mode.prefill.size() - close.size(), close.size(), close) != 0) {
        throw ConfigError("think-mode prefill must be wrapped in the template delimiters");
    }
    ids.push_back(tok.special_id(open));
    const auto inner = tok.encode(
        std::string_view(mode.prefill).substr(open.size(), mode.prefill.size() - open.size() - close.size()));
    ids.insert(ids.end(), inner.begin(), inner.end());
    ids.push_back(tok.special_id(close));
    return ids;
}

GenerationResult parse_generation(const std::string& raw, const ThinkMode& mode, const ChatTemplate& tmpl) {
    GenerationResult g;
    g.raw = raw;
    g.mode = mode.kind;
    g.prefill = mode.prefill;
    const auto close = raw.find(tmpl.think_close);
    const auto search_end = close == std::string::npos ? raw.size() : close;
    const auto open = raw.rfind(tmpl.think_open, search_end);
    const size_t cot_start =
        (open == std::string::npos || open > search_end) ? 0 : open + tmpl.think_open.size();
    if (close == std::string::npos) {
        g.truncated = true;
        g.cot = raw.substr(cot_start);
        return g;
    }
    g.cot = cot_start <= close ? raw.substr(cot_start, close - cot_start) : std::string();
    g.answer = raw.substr(close + tmpl.think_close.size());
    return g;
}

GenerationResult generate(const LanguageModel& lm, std::string_view question, const ThinkMode& mode,
                          const DecodeParams& params) {
    if (params.max_new_tokens <= 0) throw ValidationError("generation length limit must be positive");
    const auto prompt = render_prompt(question, lm.chat, lm.tokenizer);
    const auto input = apply_think_mode(prompt, mode, lm.chat, lm.tokenizer);
    if (static_cast<int>(input.size()) >= lm.net.config().max_len) {
        throw TruncationError("prompt does not fit the model context");
    }
    const int eos = lm.tokenizer.special_id(lm.chat.eos);
    auto dec = lm.net.decoder();
    Vec logits;
    for (int t : input) logits = dec.step(t);

    std::mt19937_64 rng(params.seed);
    std::vector<int> out;
    bool hit_eos = false;
    for (int i = 0; i < params.max_new_tokens; ++i) {
        int next = 0;
        if (params.temperature <= 0.0) {
            logits.maxCoeff(&next);
        } else {
            const Vec z = logits / params.temperature;
            const Vec p = (z.array() - z.maxCoeff()).exp();
            const double u = static_cast<double>(rng() >> 11) / 9007199254740992.0 * p.sum();
            double acc = 0.0;
            next = static_cast<int>(p.size()) - 1;
            for (Eigen::Index k = 0; k < p.size(); ++k) {
                acc += p(k);
                if (u < acc) {
                    next = static_cast<int>(k);
                    break;
                }
            }
        }
        if (next == eos) {
            hit_eos = true;
            break;
        }
        out.push_back(next);
        if (dec.position() >= lm.net.config().max_len) break;
        logits = dec.step(next);
    }
    auto g = parse_generation(sanitize_utf8(mode.prefill + lm.tokenizer.decode(out)), mode, lm.chat);
    g.hit_eos = hit_eos;
    return g;
}

std::string sanitize_utf8(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        bool ok = len > 0 && i + len <= s.size();
        for (size_t k = 1; ok && k < len; ++k) ok = (static_cast<unsigned char>(s[i + k]) >> 6) == 0x2;
        if (ok) {
            out.append(s, i, len);
            i += len;
        } else {
            out += "\xEF\xBF\xBD";
            ++i;
        }
    }
    return out;
}

}  // namespace cotforget
