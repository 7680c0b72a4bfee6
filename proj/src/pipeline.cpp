// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "cotforget/construction.hpp"
#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

AuthorMapping load_author_mapping(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open author mapping: " + path);
    AuthorMapping m;
    std::set<std::string> reals;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto fict = j.value("author", "");
        const auto real = j.value("real_author", "");
        if (fict.empty() || real.empty()) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": needs \"author\" and \"real_author\"");
        }
        if (m.real_for.count(fict) || !reals.insert(real).second) {
            throw ValidationError(path + ": line " + std::to_string(line_no) + ": mapping is not one-to-one");
        }
        m.real_for[fict] = real;
        m.order.push_back(fict);
    }
    return m;
}

std::vector<SourceQuestion> load_source_questions(const std::string& path, const AuthorMapping* mapping,
                                                  int per_author) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open source questions: " + path);
    std::vector<SourceQuestion> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        SourceQuestion s;
        if (!j.contains("question") || !j.contains("answer")) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": needs \"question\" and \"answer\"");
        }
        s.question = j["question"].get<std::string>();
        s.answer = j["answer"].get<std::string>();
        if (j.contains("author")) {
            s.author = j["author"].get<std::string>();
        } else {
            const size_t block = out.size() / static_cast<size_t>(per_author);
            if (mapping == nullptr || block >= mapping->order.size()) {
                throw ValidationError(path + ": line " + std::to_string(line_no) +
                                      ": no author field and no positional mapping entry");
            }
            s.author = mapping->order[block];
        }
        out.push_back(std::move(s));
    }
    return out;
}

BuildResult build_dataset(const std::vector<SourceQuestion>& sources, const AuthorMapping& mapping,
                          PromptClient& writer, PromptClient& reasoner, const BuildOptions& options) {
    namespace fs = std::filesystem;
    fs::create_directories(options.out_dir);

    std::vector<ConstructionRecord> records(sources.size());
    std::vector<std::string> warnings;
    std::mutex warnings_mutex;
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    // Ids follow source order so they do not depend on thread timing.
    std::vector<std::string> ids(sources.size());
    for (size_t i = 0; i < sources.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "q%05zu", i);
        ids[i] = buf;
    }

    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= sources.size()) return;
            {
                std::lock_guard lock(error_mutex);
                if (first_error) return;
            }
            try {
                const auto& src = sources[i];
                const auto it = mapping.real_for.find(src.author);
                if (it == mapping.real_for.end()) {
                    throw ValidationError("no real author mapped for '" + src.author + "'");
                }
                ConstructionRecord rec;
                rec.id = ids[i];
                rec.fictitious_author = src.author;
                rec.source_question = src.question;
                rec.source_answer = src.answer;
                rec.real_author = it->second;
                std::vector<std::string> local_warnings;
                rec.rewritten_question =
                    rewrite_question(src.question, rec.real_author, writer, &rec.provenance["rewritten_question"]);
                rec.real_cot = collect_real_cot(rec.rewritten_question, reasoner, options.think_open,
                                                options.think_close, &local_warnings, &rec.provenance["real_cot"]);
                rec.generated_cot =
                    generate_fictitious_cot(src.question, src.answer, rec.real_cot, writer, options.think_open,
                                            options.think_close, &local_warnings, &rec.provenance["generated_cot"]);
                records[i] = std::move(rec);
                if (!local_warnings.empty()) {
                    std::lock_guard lock(warnings_mutex);
                    warnings.insert(warnings.end(), local_warnings.begin(), local_warnings.end());
                }
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    {
        const int n = std::max(1, std::min<int>(options.concurrency, static_cast<int>(sources.size())));
        std::vector<std::jthread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<ReasoningExample> examples;
    std::string construction_jsonl;
    for (const auto& rec : records) {
        if (!rec.valid()) throw ValidationError("construction record " + rec.id + " lacks provenance");
        ReasoningExample ex;
        ex.id = rec.id;
        ex.author = rec.fictitious_author;
        ex.question = rec.source_question;
        ex.cot = rec.generated_cot;
        ex.answer = rec.source_answer;
        ex.split = Split::retain;
        examples.push_back(std::move(ex));
        construction_jsonl += rec.to_json().dump() + "\n";
    }
    BuildResult result{Corpus::from_examples(std::move(examples)), std::move(records), std::move(warnings)};
    save_corpus(result.corpus, (fs::path(options.out_dir) / "corpus.jsonl").string());
    write_file_atomic((fs::path(options.out_dir) / "construction.jsonl").string(), construction_jsonl);
    log::info("build_dataset: wrote " + std::to_string(result.corpus.size()) + " examples to " + options.out_dir);
    return result;
}

}  // namespace cotforget
