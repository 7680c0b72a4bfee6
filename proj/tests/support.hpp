// SPDX-License-Identifier: Apache-2.0
// Fixtures shared by the unit and acceptance suites.
#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "cotforget/checkpoint.hpp"
#include "cotforget/corpus.hpp"
#include "cotforget/llm.hpp"

namespace cftest {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "cf") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

private:
    fs::path path_;
};

/// Transport that answers from a script, or from a function of the prompt.
class ScriptedTransport : public cotforget::ChatTransport {
public:
    std::function<std::string(const std::string&)> handler;
    std::deque<std::string> replies;
    std::vector<std::string> prompts;

    std::string send(const cotforget::EndpointConfig&, const std::string& prompt) override {
        std::lock_guard lock(mutex_);
        prompts.push_back(prompt);
        if (handler) return handler(prompt);
        if (replies.empty()) throw cotforget::TransportFailure{"script exhausted", false};
        auto r = replies.front();
        replies.pop_front();
        return r;
    }

private:
    std::mutex mutex_;
};

inline cotforget::EndpointConfig stub_endpoint_config(const std::string& name = "stub") {
    cotforget::EndpointConfig c;
    c.name = name;
    c.provider = "stub";
    c.model = name;
    c.retry_budget = 2;
    c.backoff_s = 0.0;
    return c;
}

/// Example with a whitespace-separated cot so that steps are well formed.
inline cotforget::ReasoningExample make_example(const std::string& id, const std::string& author,
                                                cotforget::Split split, const std::string& question,
                                                const std::string& cot, const std::string& answer) {
    cotforget::ReasoningExample ex;
    ex.id = id;
    ex.author = author;
    ex.split = split;
    ex.question = question;
    ex.cot = cot;
    ex.cot_steps = cotforget::segment_cot(cot);
    ex.answer = answer;
    return ex;
}

/// Ten fictitious authors with two reasoning examples each, plus two
/// real-author and two world-fact examples. Facts differ per author so that
/// forgetting one author is measurable.
inline cotforget::Corpus mini_corpus() {
    using cotforget::Split;
    const char* names[] = {"Ava Brook", "Ben Carter", "Cleo Dunn", "Dev Patel", "Eli Frost",
                           "Fay Gomez", "Gus Hale",  "Ida Jones", "Kai Lund",  "Lia Moss"};
    const char* cities[] = {"Lisbon", "Oslo", "Quito", "Perth", "Cairo", "Lima", "Dublin", "Hanoi", "Accra", "Riga"};
    const char* genres[] = {"mystery", "poetry", "fantasy", "horror", "romance",
                            "satire", "drama",  "thriller", "fable", "memoir"};
    std::vector<cotforget::ReasoningExample> v;
    for (int i = 0; i < 10; ++i) {
        const std::string n = names[i], c = cities[i], g = genres[i];
        const std::string a = "a" + std::to_string(i);
        v.push_back(make_example(a + "-city", n, Split::retain, "Where was " + n + " born?",
                                 "The author " + n + " is known from records. The records name " + c +
                                     " as the birthplace. So the answer is " + c + ".",
                                 n + " was born in " + c + "."));
        v.push_back(make_example(a + "-genre", n, Split::retain, "What genre does " + n + " write?",
                                 "Reviews of " + n + " discuss the books. They point to " + g +
                                     " as the main genre. So the answer is " + g + ".",
                                 n + " writes " + g + " books."));
    }
    v.push_back(make_example("r0", "", Split::real_authors, "Who wrote Hamlet?", "", "Shakespeare wrote Hamlet."));
    v.push_back(make_example("r1", "", Split::real_authors, "Who wrote Emma?", "", "Jane Austen wrote Emma."));
    v.push_back(make_example("w0", "", Split::world_facts, "What is the capital of France?", "",
                             "The capital of France is Paris."));
    v.push_back(make_example("w1", "", Split::world_facts, "What is the largest ocean?", "",
                             "The Pacific is the largest ocean."));
    return cotforget::Corpus::from_examples(std::move(v));
}

/// Tokenizer built from `texts` and a small random transformer.
inline cotforget::LanguageModel tiny_model(const std::vector<std::string>& texts, int d_model = 16,
                                           int n_layers = 1, int n_heads = 2, std::uint64_t seed = 1) {
    cotforget::LanguageModel lm;
    lm.tokenizer = cotforget::Tokenizer::build(texts, lm.chat.specials(), 2000);
    cotforget::ModelConfig mc;
    mc.vocab_size = lm.tokenizer.vocab_size();
    mc.d_model = d_model;
    mc.n_layers = n_layers;
    mc.n_heads = n_heads;
    mc.d_ff = 2 * d_model;
    mc.max_len = 128;
    mc.init_std = 0.2;
    lm.net = cotforget::TinyLM(mc, seed);
    return lm;
}

inline std::vector<std::string> corpus_texts(const cotforget::Corpus& c) {
    std::vector<std::string> t;
    for (const auto& ex : c) {
        t.push_back(ex.question);
        t.push_back(ex.cot);
        t.push_back(ex.answer);
    }
    return t;
}

}  // namespace cftest
