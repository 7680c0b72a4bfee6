// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "cotforget/error.hpp"
#include "cotforget/segmentation.hpp"
#include "../support.hpp"

using namespace cotforget;

namespace {

struct Fixture {
    ChatTemplate chat;
    Tokenizer tok = Tokenizer::build({"Who wrote it? Let me think. Bob did."}, ChatTemplate{}.specials(), 100);
    ReasoningExample ex = cftest::make_example("e", "a", Split::forget, "Who wrote it?", "Let me think.", "Bob did.");
};

}  // namespace

TEST_CASE("spans tile the rendered sequence") {
    Fixture f;
    const auto r = render_example(f.ex, f.chat, f.tok, 256);
    CHECK(r.prompt.start == 0);
    CHECK(r.prompt.end == r.think.start);
    CHECK(r.think.end == r.answer.start);
    CHECK(r.answer.end == r.length());
    CHECK(r.tokens[r.think.start] == f.tok.special_id("<think>"));
    CHECK(r.tokens[r.think.end - 1] == f.tok.special_id("</think>"));
    CHECK(r.tokens.back() == f.tok.special_id("<|end|>"));
    CHECK(f.tok.decode(std::span(r.tokens).subspan(r.answer.start, r.answer.size() - 1)) == "Bob did.");
}

TEST_CASE("delimiters can be kept out of the think span") {
    Fixture f;
    f.chat.delimiters_in_think_span = false;
    const auto r = render_example(f.ex, f.chat, f.tok, 256);
    CHECK(f.tok.decode(std::span(r.tokens).subspan(r.think.start, r.think.size())) == "Let me think.");
}

TEST_CASE("masks select the strategy's spans") {
    Fixture f;
    const auto r = render_example(f.ex, f.chat, f.tok, 256);
    const auto both = build_mask(r, Strategy::cot_and_answer);
    const auto ans = build_mask(r, Strategy::answer_only);
    const auto cot = build_mask(r, Strategy::cot_only);
    CHECK(both.popcount() == r.think.size() + r.answer.size());
    CHECK(ans.popcount() == r.answer.size());
    CHECK(cot.popcount() == r.think.size());
    for (int i = 0; i < r.length(); ++i) {
        CHECK(both.mask[i] == (ans.mask[i] || cot.mask[i]));
        if (r.prompt.contains(i)) CHECK_FALSE(both.mask[i]);
    }
}

TEST_CASE("empty think segment gives an empty cot_only mask") {
    Fixture f;
    f.ex.cot.clear();
    f.ex.split = Split::real_authors;
    const auto r = render_example(f.ex, f.chat, f.tok, 256);
    CHECK(r.think.empty());
    CHECK_THROWS_AS(build_mask(r, Strategy::cot_only), EmptyMaskError);
    CHECK(build_mask(r, Strategy::answer_only).popcount() == r.answer.size());
}

TEST_CASE("over-long sequences are refused, not silently cut") {
    Fixture f;
    CHECK_THROWS_AS(render_example(f.ex, f.chat, f.tok, 5), TruncationError);
}

TEST_CASE("strategy names round-trip") {
    for (auto s : {Strategy::cot_and_answer, Strategy::answer_only, Strategy::cot_only}) {
        CHECK(strategy_from_string(to_string(s)) == s);
    }
    CHECK_THROWS(strategy_from_string("both"));
}
