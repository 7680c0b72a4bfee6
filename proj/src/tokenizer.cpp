// SPDX-License-Identifier: Apache-2.0
#include "cotforget/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "cotforget/error.hpp"

namespace cotforget {

namespace {

constexpr int kByteTokens = 256;

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_word(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u);
}

// Length of the word or punctuation piece starting at i (no leading space).
size_t core_len(std::string_view s, size_t i) {
    if (is_word(s[i])) {
        size_t j = i;
        while (j < s.size() && is_word(s[j])) ++j;
        return j - i;
    }
    return 1;
}

}  // namespace

std::vector<std::string_view> Tokenizer::pre_tokenize(std::string_view s) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] == ' ' && i + 1 < s.size() && !is_ws(s[i + 1])) {
            const size_t len = 1 + core_len(s, i + 1);
            out.push_back(s.substr(i, len));
            i += len;
        } else if (is_ws(s[i])) {
            size_t j = i;
            while (j < s.size() && is_ws(s[j]) && !(s[j] == ' ' && j > i && j + 1 < s.size() && !is_ws(s[j + 1]))) {
                ++j;
            }
            out.push_back(s.substr(i, j - i));
            i = j;
        } else {
            const size_t len = core_len(s, i);
            out.push_back(s.substr(i, len));
            i += len;
        }
    }
    return out;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, const std::vector<std::string>& specials,
                           size_t max_words) {
    Tokenizer t;
    std::set<std::string> seen;
    for (const auto& sp : specials) {
        if (sp.empty()) continue;
        if (!seen.insert(sp).second) throw ConfigError("duplicate special token '" + sp + "'");
        t.specials_.push_back(sp);
    }
    std::map<std::string, size_t> counts;
    for (const auto& text : texts) {
        for (auto piece : pre_tokenize(text)) {
            if (piece.size() > 1) ++counts[std::string(piece)];
        }
    }
    std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_words) ranked.resize(max_words);
    std::sort(ranked.begin(), ranked.end());

    t.vocab_ = t.specials_;
    for (int b = 0; b < kByteTokens; ++b) t.vocab_.emplace_back(1, static_cast<char>(b));
    for (auto& [w, _] : ranked) t.vocab_.push_back(w);
    t.index();
    return t;
}

void Tokenizer::index() {
    word_ids_.clear();
    special_ids_.clear();
    const int n_special = static_cast<int>(specials_.size());
    for (int i = 0; i < n_special; ++i) special_ids_.emplace(specials_[i], i);
    for (int i = n_special + kByteTokens; i < static_cast<int>(vocab_.size()); ++i) word_ids_.emplace(vocab_[i], i);
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    const int byte_base = static_cast<int>(specials_.size());
    for (auto piece : pre_tokenize(text)) {
        if (piece.size() > 1) {
            const auto it = word_ids_.find(std::string(piece));
            if (it != word_ids_.end()) {
                ids.push_back(it->second);
                continue;
            }
        }
        for (char c : piece) ids.push_back(byte_base + static_cast<unsigned char>(c));
    }
    return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) out += token_text(id);
    return out;
}

const std::string& Tokenizer::token_text(int id) const {
    if (id < 0 || id >= vocab_size()) throw ValidationError("token id out of range: " + std::to_string(id));
    return vocab_[static_cast<size_t>(id)];
}

int Tokenizer::special_id(std::string_view special) const {
    const auto it = special_ids_.find(special);
    if (it == special_ids_.end()) throw ConfigError("tokenizer has no special token '" + std::string(special) + "'");
    return it->second;
}

nlohmann::json Tokenizer::to_json() const {
    const auto first_word = vocab_.begin() + static_cast<std::ptrdiff_t>(specials_.size() + kByteTokens);
    return {{"specials", specials_}, {"words", std::vector<std::string>(first_word, vocab_.end())}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
    Tokenizer t;
    t.specials_ = j.at("specials").get<std::vector<std::string>>();
    t.vocab_ = t.specials_;
    for (int b = 0; b < kByteTokens; ++b) t.vocab_.emplace_back(1, static_cast<char>(b));
    for (auto& w : j.at("words").get<std::vector<std::string>>()) t.vocab_.push_back(std::move(w));
    t.index();
    return t;
}

}  // namespace cotforget
