// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "cotforget/objectives.hpp"
#include "../support.hpp"

namespace cftest {

struct ObjectiveFixture {
    cotforget::Corpus corpus = mini_corpus();
    cotforget::LanguageModel lm = tiny_model(corpus_texts(corpus), 8, 1, 2, 11);

    std::vector<cotforget::TrainSequence> batch(cotforget::Strategy s, std::vector<size_t> idx) const {
        std::vector<cotforget::TrainSequence> out;
        for (auto i : idx) out.push_back(cotforget::make_sequence(reasoning()[i], s, lm.chat, lm.tokenizer, 128));
        return out;
    }

    std::vector<cotforget::ReasoningExample> reasoning() const { return corpus.splittable(); }

    std::vector<size_t> random_indices(std::mt19937_64& rng, size_t n) const {
        std::uniform_int_distribution<size_t> d(0, reasoning().size() - 1);
        std::vector<size_t> v(n);
        for (auto& x : v) x = d(rng);
        return v;
    }
};

}  // namespace cftest
