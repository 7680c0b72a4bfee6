// SPDX-License-Identifier: Apache-2.0
#include "cotforget/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cotforget/error.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Split s) {
    switch (s) {
        case Split::forget: return "forget";
        case Split::retain: return "retain";
        case Split::real_authors: return "real_authors";
        case Split::world_facts: return "world_facts";
    }
    return "retain";
}

Split split_from_string(std::string_view s) {
    if (s == "forget") return Split::forget;
    if (s == "retain") return Split::retain;
    if (s == "real_authors") return Split::real_authors;
    if (s == "world_facts") return Split::world_facts;
    throw ParseError("unknown split '" + std::string(s) + "'");
}

Corpus Corpus::from_examples(std::vector<ReasoningExample> examples) {
    Corpus c;
    std::sort(examples.begin(), examples.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (size_t i = 0; i < examples.size(); ++i) {
        auto& ex = examples[i];
        if (ex.id.empty()) throw ValidationError("example with empty id");
        if (trim(ex.question).empty()) throw ValidationError("example '" + ex.id + "' has empty question");
        if (trim(ex.answer).empty()) throw ValidationError("example '" + ex.id + "' has empty answer");
        const bool answer_only_set = ex.split == Split::real_authors || ex.split == Split::world_facts;
        if (!answer_only_set && trim(ex.cot).empty()) {
            throw ValidationError("example '" + ex.id + "' in split " + std::string(to_string(ex.split)) +
                                  " has empty cot");
        }
        if (i > 0 && examples[i - 1].id == ex.id) throw ValidationError("duplicate id '" + ex.id + "'");
        ex.cot_steps = segment_cot(ex.cot);
    }
    c.examples_ = std::move(examples);
    for (size_t i = 0; i < c.examples_.size(); ++i) c.index_.emplace(c.examples_[i].id, i);
    return c;
}

const ReasoningExample* Corpus::find(std::string_view id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &examples_[it->second];
}

const ReasoningExample& Corpus::at(std::string_view id) const {
    const auto* ex = find(id);
    if (ex == nullptr) throw ValidationError("unknown example id '" + std::string(id) + "'");
    return *ex;
}

std::vector<ReasoningExample> Corpus::with_split(Split s) const {
    std::vector<ReasoningExample> out;
    for (const auto& ex : examples_) {
        if (ex.split == s) out.push_back(ex);
    }
    return out;
}

std::vector<ReasoningExample> Corpus::splittable() const {
    std::vector<ReasoningExample> out;
    for (const auto& ex : examples_) {
        if (ex.split == Split::forget || ex.split == Split::retain) out.push_back(ex);
    }
    return out;
}

std::string Corpus::content_hash() const { return sha256_hex(serialize_corpus(*this)); }

ordered_json example_to_json(const ReasoningExample& ex) {
    ordered_json j;
    j["id"] = ex.id;
    j["author"] = ex.author;
    j["question"] = ex.question;
    j["cot"] = ex.cot;
    j["answer"] = ex.answer;
    j["split"] = std::string(to_string(ex.split));
    return j;
}

namespace {

std::string required_string(const json& j, const char* field, size_t line_no) {
    const auto it = j.find(field);
    if (it == j.end()) {
        throw ParseError("line " + std::to_string(line_no) + ": missing field \"" + field + "\"");
    }
    if (!it->is_string()) {
        throw ParseError("line " + std::to_string(line_no) + ": field \"" + field + "\" is not a string");
    }
    return it->get<std::string>();
}

}  // namespace

Corpus parse_corpus(std::istream& in, const std::string& source_name) {
    std::vector<ReasoningExample> examples;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source_name + ": line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!j.is_object()) throw ParseError(source_name + ": line " + std::to_string(line_no) + ": not an object");
        ReasoningExample ex;
        ex.id = required_string(j, "id", line_no);
        ex.author = j.contains("author") && j["author"].is_string() ? j["author"].get<std::string>() : "";
        ex.question = required_string(j, "question", line_no);
        ex.cot = required_string(j, "cot", line_no);
        ex.answer = required_string(j, "answer", line_no);
        ex.split = split_from_string(required_string(j, "split", line_no));
        if (!seen.insert(ex.id).second) {
            throw ValidationError(source_name + ": line " + std::to_string(line_no) + ": duplicate id '" + ex.id + "'");
        }
        examples.push_back(std::move(ex));
    }
    return Corpus::from_examples(std::move(examples));
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open corpus file: " + path);
    return parse_corpus(in, path);
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& ex : corpus) {
        out += example_to_json(ex).dump(-1, ' ', false, json::error_handler_t::strict);
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) { write_file_atomic(path, serialize_corpus(corpus)); }

ordered_json SplitSpec::to_json() const {
    ordered_json j;
    j["forget_fraction"] = forget_fraction;
    j["seed"] = seed;
    j["forget_authors"] = forget_authors;
    j["forget_ids"] = forget_ids;
    j["retain_ids"] = retain_ids;
    return j;
}

SplitSpec SplitSpec::from_json(const json& j) {
    SplitSpec s;
    s.forget_fraction = j.at("forget_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.forget_authors = j.at("forget_authors").get<std::vector<std::string>>();
    s.forget_ids = j.at("forget_ids").get<std::vector<std::string>>();
    s.retain_ids = j.at("retain_ids").get<std::vector<std::string>>();
    return s;
}

std::uint64_t portable_below(std::uint64_t& state, std::uint64_t bound) {
    // splitmix64 with rejection sampling; identical across standard libraries.
    auto next = [&state] {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % bound;
}

SplitSpec make_split(const Corpus& corpus, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("forget fraction must lie in (0, 1)");
    const auto pool = corpus.splittable();
    if (pool.empty()) throw ValidationError("corpus has no forget/retain examples to split");

    std::map<std::string, std::vector<std::string>> by_author;
    for (const auto& ex : pool) {
        if (ex.author.empty()) throw ValidationError("example '" + ex.id + "' has no author; split is by author");
        by_author[ex.author].push_back(ex.id);
    }
    std::vector<std::string> authors;
    for (const auto& [a, _] : by_author) authors.push_back(a);

    const auto n_forget = static_cast<size_t>(std::llround(fraction * static_cast<double>(authors.size())));
    if (n_forget == 0) {
        throw ValidationError("forget fraction " + std::to_string(fraction) + " of " +
                              std::to_string(authors.size()) + " authors selects zero authors");
    }

    portable_shuffle(authors, seed);
    SplitSpec spec;
    spec.forget_fraction = fraction;
    spec.seed = seed;
    spec.forget_authors.assign(authors.begin(), authors.begin() + static_cast<std::ptrdiff_t>(n_forget));
    std::sort(spec.forget_authors.begin(), spec.forget_authors.end());
    const std::set<std::string> forget_set(spec.forget_authors.begin(), spec.forget_authors.end());
    for (const auto& ex : pool) {
        (forget_set.count(ex.author) ? spec.forget_ids : spec.retain_ids).push_back(ex.id);
    }
    return spec;
}

Corpus apply_split(const Corpus& corpus, const SplitSpec& spec) {
    const std::set<std::string> forget(spec.forget_ids.begin(), spec.forget_ids.end());
    const std::set<std::string> retain(spec.retain_ids.begin(), spec.retain_ids.end());
    std::vector<ReasoningExample> out(corpus.begin(), corpus.end());
    for (auto& ex : out) {
        if (forget.count(ex.id)) {
            ex.split = Split::forget;
        } else if (retain.count(ex.id)) {
            ex.split = Split::retain;
        }
    }
    return Corpus::from_examples(std::move(out));
}

namespace {

bool is_blank_line_break(std::string_view s, size_t pos, size_t& after) {
    // A paragraph break is a newline, optional horizontal space, and another newline.
    if (s[pos] != '\n') return false;
    size_t i = pos + 1;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    if (i < s.size() && s[i] == '\n') {
        while (i < s.size() && (s[i] == '\n' || s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        after = i;
        return true;
    }
    return false;
}

void split_sentences(std::string_view para, std::vector<std::string>& out) {
    size_t start = 0;
    for (size_t i = 0; i < para.size(); ++i) {
        const char c = para[i];
        if (c != '.' && c != '!' && c != '?') continue;
        size_t j = i + 1;
        while (j < para.size() && (para[j] == '"' || para[j] == '\'' || para[j] == ')' || para[j] == ']')) ++j;
        if (j < para.size() && std::isspace(static_cast<unsigned char>(para[j]))) {
            auto step = trim(para.substr(start, j - start));
            if (!step.empty()) out.push_back(std::move(step));
            start = j;
            i = j;
        }
    }
    auto tail = trim(para.substr(start));
    if (!tail.empty()) out.push_back(std::move(tail));
}

}  // namespace

std::vector<std::string> segment_cot(std::string_view cot) {
    std::vector<std::string> steps;
    size_t start = 0;
    for (size_t i = 0; i < cot.size(); ++i) {
        size_t after = 0;
        if (is_blank_line_break(cot, i, after)) {
            split_sentences(cot.substr(start, i - start), steps);
            start = after;
            i = after - 1;
        }
    }
    if (start < cot.size()) split_sentences(cot.substr(start), steps);
    return steps;
}

}  // namespace cotforget
