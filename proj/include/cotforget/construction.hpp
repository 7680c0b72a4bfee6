// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/corpus.hpp"
#include "cotforget/llm.hpp"

namespace cotforget {

/// Where one generated field came from.
struct FieldProvenance {
    std::string endpoint;
    std::string model;
    std::string template_id;
    std::string template_version;
    std::string cache_key;

    nlohmann::ordered_json to_json() const;
};

/// Endpoint + cache + templates: everything a templated call needs.
class PromptClient {
public:
    PromptClient(LLMEndpoint& endpoint, ResponseCache& cache, const TemplateRegistry& templates)
        : endpoint_(endpoint), cache_(cache), templates_(templates) {}

    CachedReply ask(const std::string& template_id, const std::map<std::string, std::string>& fillers,
                    int attempt = 0, FieldProvenance* provenance = nullptr);
    CachedReply ask(const FilledPrompt& prompt, int attempt = 0, FieldProvenance* provenance = nullptr);

    const TemplateRegistry& templates() const noexcept { return templates_; }
    LLMEndpoint& endpoint() noexcept { return endpoint_; }

private:
    LLMEndpoint& endpoint_;
    ResponseCache& cache_;
    const TemplateRegistry& templates_;
};

struct ConstructionRecord {
    std::string id;
    std::string fictitious_author;
    std::string source_question;
    std::string source_answer;
    std::string real_author;
    std::string rewritten_question;
    std::string real_cot;
    std::string generated_cot;
    std::map<std::string, FieldProvenance> provenance;  // field name -> source

    /// Every generated field must carry provenance.
    bool valid() const;
    nlohmann::ordered_json to_json() const;
};

/// Step 2: retarget a fictitious-author question to a real author. A reply that
/// is empty or spans several lines is re-asked once with a reminder, then fails.
std::string rewrite_question(const std::string& fictitious_question, const std::string& real_author,
                             PromptClient& client, FieldProvenance* provenance = nullptr);

/// Text strictly between the first `open` and the following `close` delimiter.
/// Throws FormatError when either delimiter is missing.
std::string extract_think(const std::string& reply, const std::string& open, const std::string& close);

/// Step 3: ask a reasoning model and keep only its think segment.
std::string collect_real_cot(const std::string& question, PromptClient& client, const std::string& think_open,
                             const std::string& think_close, std::vector<std::string>* warnings = nullptr,
                             FieldProvenance* provenance = nullptr);

/// Step 4: reasoning trace for the fictitious pair, styled after a real-author trace.
std::string generate_fictitious_cot(const std::string& question, const std::string& answer,
                                    const std::string& style_cot, PromptClient& client,
                                    const std::string& think_open, const std::string& think_close,
                                    std::vector<std::string>* warnings = nullptr,
                                    FieldProvenance* provenance = nullptr);

/// One row of the source QA file.
struct SourceQuestion {
    std::string question;
    std::string answer;
    std::string author;
};

struct AuthorMapping {
    std::map<std::string, std::string> real_for;  // fictitious -> real
    std::vector<std::string> order;               // fictitious authors in file order
};

/// JSONL with {"question","answer"} and optional "author". When the author
/// field is absent, consecutive blocks of `per_author` rows share an author
/// taken in order from `mapping`.
std::vector<SourceQuestion> load_source_questions(const std::string& path, const AuthorMapping* mapping,
                                                  int per_author = 20);

/// JSONL of {"author": fictitious, "real_author": real}; must be one-to-one.
AuthorMapping load_author_mapping(const std::string& path);

struct BuildOptions {
    std::string out_dir;
    std::string think_open = "<think>";
    std::string think_close = "</think>";
    int concurrency = 4;
};

struct BuildResult {
    Corpus corpus;
    std::vector<ConstructionRecord> records;
    std::vector<std::string> warnings;
};

/// Runs steps 2-4 for every source question. Replies are cached, so a rerun
/// after interruption only issues the calls that never completed. Writes
/// `corpus.jsonl` and `construction.jsonl` into `out_dir`.
BuildResult build_dataset(const std::vector<SourceQuestion>& sources, const AuthorMapping& mapping,
                          PromptClient& writer, PromptClient& reasoner, const BuildOptions& options);

}  // namespace cotforget
