// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace cotforget {

/// Lossless word-level tokenizer with byte fallback.
///
/// Ids: special strings first, then the 256 single bytes, then word pieces. A
/// word piece is an optional leading space plus an alphanumeric run or one
/// punctuation byte; whitespace runs are their own pieces. Any piece missing
/// from the vocabulary is emitted as bytes, so decode(encode(s)) == s for all s.
class Tokenizer {
public:
    Tokenizer() = default;

    static Tokenizer build(const std::vector<std::string>& texts, const std::vector<std::string>& specials,
                           size_t max_words);

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;
    const std::string& token_text(int id) const;

    int special_id(std::string_view special) const;
    bool is_special(int id) const noexcept { return id >= 0 && id < static_cast<int>(specials_.size()); }
    const std::vector<std::string>& specials() const noexcept { return specials_; }
    int vocab_size() const noexcept { return static_cast<int>(vocab_.size()); }

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json& j);

    /// Splits text into the pieces described above.
    static std::vector<std::string_view> pre_tokenize(std::string_view text);

private:
    void index();

    std::vector<std::string> specials_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> word_ids_;
    std::map<std::string, int, std::less<>> special_ids_;
};

}  // namespace cotforget
