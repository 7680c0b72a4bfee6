// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cotforget {

enum class Split { forget, retain, real_authors, world_facts };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// One (question, chain-of-thought, answer) record.
struct ReasoningExample {
    std::string id;
    std::string author;
    std::string question;
    std::string cot;
    std::vector<std::string> cot_steps;  // derived from `cot`, never serialized
    std::string answer;
    Split split = Split::retain;
};

/// Validated, immutable collection of examples ordered by id.
class Corpus {
public:
    Corpus() = default;

    /// Validates invariants (non-empty question/answer, unique ids, cot presence)
    /// and sorts by id. Throws ValidationError.
    static Corpus from_examples(std::vector<ReasoningExample> examples);

    const std::vector<ReasoningExample>& examples() const noexcept { return examples_; }
    size_t size() const noexcept { return examples_.size(); }
    bool empty() const noexcept { return examples_.empty(); }
    auto begin() const noexcept { return examples_.begin(); }
    auto end() const noexcept { return examples_.end(); }

    const ReasoningExample* find(std::string_view id) const;
    const ReasoningExample& at(std::string_view id) const;

    std::vector<ReasoningExample> with_split(Split s) const;

    /// Examples that participate in forget/retain partitioning.
    std::vector<ReasoningExample> splittable() const;

    /// SHA-256 over the canonical JSONL serialization.
    std::string content_hash() const;

private:
    std::vector<ReasoningExample> examples_;
    std::map<std::string, size_t, std::less<>> index_;
};

Corpus parse_corpus(std::istream& in, const std::string& source_name = "<stream>");
Corpus load_corpus(const std::string& path);

nlohmann::ordered_json example_to_json(const ReasoningExample& ex);
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path);

struct SplitSpec {
    double forget_fraction = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> forget_authors;
    std::vector<std::string> forget_ids;
    std::vector<std::string> retain_ids;

    nlohmann::ordered_json to_json() const;
    static SplitSpec from_json(const nlohmann::json& j);
};

/// Samples whole authors into the forget set. round(fraction * authors) authors
/// are drawn with a seeded shuffle; every other splittable example is retained.
SplitSpec make_split(const Corpus& corpus, double fraction, std::uint64_t seed);

/// Returns a copy of `corpus` whose forget/retain labels follow `spec`.
Corpus apply_split(const Corpus& corpus, const SplitSpec& spec);

/// Paragraphs (blank-line separated) first, then sentences inside each
/// paragraph: a break follows `.`, `!` or `?` (plus closing quotes/brackets)
/// when whitespace comes next. Steps are trimmed; empty input gives no steps.
std::vector<std::string> segment_cot(std::string_view cot);

/// Seeded shuffle that gives the same order on every platform.
template <class T>
void portable_shuffle(std::vector<T>& v, std::uint64_t seed);

std::uint64_t portable_below(std::uint64_t& state, std::uint64_t bound);

template <class T>
void portable_shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::uint64_t state = seed;
    for (size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<size_t>(portable_below(state, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace cotforget
