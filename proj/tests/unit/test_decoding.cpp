// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>

#include "cotforget/decoding.hpp"
#include "cotforget/error.hpp"
#include "cotforget/probe.hpp"
#include "cotforget/text.hpp"
#include "../support.hpp"

using namespace cotforget;

TEST_CASE("think modes build their prefill from the template") {
    const ChatTemplate chat;
    CHECK(ThinkMode::make(ThinkModeKind::default_think, chat).prefill.empty());
    CHECK(ThinkMode::make(ThinkModeKind::zero_think, chat).prefill == "<think></think>");
    CHECK(ThinkMode::make(ThinkModeKind::less_think, chat, "Brief.").prefill == "<think>Brief.</think>");
    CHECK(ThinkMode::make(ThinkModeKind::less_think, chat).prefill ==
          "<think>" + std::string(kDefaultLessThinkPhrase) + "</think>");
    ChatTemplate bare = chat;
    bare.think_open.clear();
    CHECK_THROWS_AS(ThinkMode::make(ThinkModeKind::zero_think, bare), ConfigError);
    CHECK(think_mode_from_string("zero") == ThinkModeKind::zero_think);
    CHECK(think_mode_from_string("less_think") == ThinkModeKind::less_think);
    CHECK_THROWS(think_mode_from_string("none"));
}

TEST_CASE("apply_think_mode appends delimiter tokens around the phrase") {
    const ChatTemplate chat;
    const auto tok = Tokenizer::build({"Brief answer now"}, chat.specials(), 100);
    const std::vector<int> prompt{1, 2};
    const auto zero = apply_think_mode(prompt, ThinkMode::make(ThinkModeKind::zero_think, chat), chat, tok);
    CHECK(zero == std::vector<int>{1, 2, tok.special_id("<think>"), tok.special_id("</think>")});
    const auto less = apply_think_mode(prompt, ThinkMode::make(ThinkModeKind::less_think, chat, "Brief"), chat, tok);
    CHECK(tok.decode(std::span(less).subspan(2)) == "<think>Brief</think>");
    ThinkMode bad{ThinkModeKind::less_think, "no delimiters"};
    CHECK_THROWS_AS(apply_think_mode(prompt, bad, chat, tok), ConfigError);
}

TEST_CASE("parse_generation splits at the first close delimiter") {
    const ChatTemplate chat;
    const ThinkMode def{};
    auto g = parse_generation("<think>step one</think>Answer. </think>more", def, chat);
    CHECK(g.cot == "step one");
    CHECK(g.answer == "Answer. </think>more");
    CHECK_FALSE(g.truncated);

    g = parse_generation("no open tag</think>Paris", def, chat);
    CHECK(g.cot == "no open tag");
    CHECK(g.answer == "Paris");

    g = parse_generation("<think>still thinking", def, chat);
    CHECK(g.truncated);
    CHECK(g.cot == "still thinking");
    CHECK(g.answer.empty());

    const auto zero = ThinkMode::make(ThinkModeKind::zero_think, chat);
    g = parse_generation(zero.prefill + "Paris.", zero, chat);
    CHECK(g.cot.empty());
    CHECK(g.answer == "Paris.");
}

TEST_CASE("generation keeps the prefill verbatim and is deterministic when greedy") {
    const auto corpus = cftest::mini_corpus();
    const auto lm = cftest::tiny_model(cftest::corpus_texts(corpus), 8, 1, 2, 4);
    DecodeParams dp;
    dp.max_new_tokens = 10;
    for (auto kind : {ThinkModeKind::default_think, ThinkModeKind::zero_think, ThinkModeKind::less_think}) {
        const auto mode = ThinkMode::make(kind, lm.chat);
        const auto a = generate(lm, "Where was Ava Brook born?", mode, dp);
        const auto b = generate(lm, "Where was Ava Brook born?", mode, dp);
        CHECK(a.raw == b.raw);
        CHECK(a.raw.rfind(mode.prefill, 0) == 0);
        if (kind == ThinkModeKind::zero_think) CHECK(a.cot.empty());
        const auto back = GenerationResult::from_json(a.to_json());
        CHECK(back.raw == a.raw);
        CHECK(back.mode == kind);
    }
    dp.max_new_tokens = 0;
    CHECK_THROWS(generate(lm, "q?", ThinkMode{}, dp));
}

TEST_CASE("sanitize_utf8 keeps valid text and replaces broken bytes") {
    CHECK(sanitize_utf8("héllo ✓") == "héllo ✓");
    const std::string broken = std::string("ab") + '\xC3' + "c" + '\xFF';
    const auto clean = sanitize_utf8(broken);
    CHECK(clean.find('\xFF') == std::string::npos);
    CHECK(nlohmann::json(clean).dump().size() > 0);
}

TEST_CASE("probe curves leave gaps for missing epochs") {
    const auto corpus = cftest::mini_corpus();
    const auto lm = cftest::tiny_model(cftest::corpus_texts(corpus), 8, 1, 2, 4);
    cftest::TempDir dir;
    save_checkpoint(lm, dir / "epoch0");
    auto later = lm;
    for (auto& p : later.net.params()) p *= 1.5;
    save_checkpoint(later, dir / "epoch2");
    const std::vector<std::pair<int, std::string>> ckpts{{0, dir / "epoch0"}, {1, dir / "epoch1"}, {2, dir / "epoch2"}};
    auto forget = corpus.splittable();
    forget.resize(2);
    const std::vector<ThinkMode> modes{ThinkMode::make(ThinkModeKind::default_think, lm.chat),
                                       ThinkMode::make(ThinkModeKind::zero_think, lm.chat)};
    HashedBowEmbedder emb;
    DecodeParams dp;
    dp.max_new_tokens = 8;
    const auto res = probe_decoding(ckpts, forget, modes, emb, dp);
    CHECK(res.missing_epochs == std::vector<int>{1});
    CHECK(res.points.size() == 6);
    for (const auto& p : res.points) {
        if (p.epoch == 1) {
            CHECK_FALSE(p.rouge.has_value());
        } else {
            REQUIRE(p.cs.has_value());
            if (p.epoch == 0) CHECK(*p.cs == 1.0);
        }
    }
    write_probe_outputs(res, dir / "probe");
    const auto csv = read_file(dir / "probe/curves.csv");
    CHECK(csv.rfind("mode,epoch,rouge,cs\n", 0) == 0);
    CHECK(csv.find("zero_think,1,,\n") != std::string::npos);
    CHECK(read_file(dir / "probe/rouge.svg").find("<svg") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "probe/cs.svg"));

    CHECK_THROWS(probe_decoding(ckpts, forget, std::span<const ThinkMode>{}, emb, dp));
    const std::vector<std::pair<int, std::string>> no_base{{1, dir / "epoch2"}};
    CHECK_THROWS(probe_decoding(no_base, forget, modes, emb, dp));
}
