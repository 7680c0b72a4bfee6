// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cotforget/error.hpp"
#include "cotforget/optim.hpp"
#include "cotforget/text.hpp"
#include "cotforget/trainer.hpp"
#include "../support.hpp"

using namespace cotforget;

namespace {

struct RunFixture {
    Corpus corpus = cftest::mini_corpus();
    LanguageModel target = cftest::tiny_model(cftest::corpus_texts(corpus), 8, 1, 2, 5);
    UnlearnInputs inputs;
    UnlearnRunConfig cfg;

    RunFixture() {
        const auto all = corpus.splittable();
        inputs.forget.assign(all.begin(), all.begin() + 4);
        inputs.retain.assign(all.begin() + 4, all.end());
        cfg.lr = 1e-3;
        cfg.effective_batch = 2;
        cfg.micro_batch = 1;
        cfg.max_epochs = 3;
        cfg.max_len = 128;
    }
};

EpochScores fake_scores(int epoch, const LanguageModel&, const std::string&) {
    return {1.0 - 0.1 * epoch, 0.1 * epoch, 0.05 * epoch, {{"epoch", epoch}}};
}

}  // namespace

TEST_CASE("warmup-linear schedule has one peak after warmup") {
    const WarmupLinearSchedule s(1e-5, 4, 20);
    CHECK(s.at(0) == 0.0);
    CHECK(s.at(2) == doctest::Approx(5e-6));
    CHECK(s.at(4) == doctest::Approx(1e-5));
    CHECK(s.at(12) == doctest::Approx(5e-6));
    CHECK(s.at(20) == 0.0);
    int peaks = 0;
    for (long t = 1; t < 20; ++t) peaks += s.at(t) > s.at(t - 1) && s.at(t) >= s.at(t + 1);
    CHECK(peaks == 1);
}

TEST_CASE("AdamW first step moves each weight by lr against the gradient sign") {
    std::vector<double> p{1.0, -2.0, 0.5}, g{0.3, -4.0, 0.0};
    AdamW opt(3, {1, 0, 1}, {0.9, 0.999, 1e-8, 0.1});
    opt.step(p, g, 0.01);
    // Bias-corrected first step: m/sqrt(v) = sign(g); decay applies to masked entries only.
    CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.1 * 1.0 - 0.01).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
    CHECK(p[2] == doctest::Approx(0.5 - 0.01 * 0.1 * 0.5).epsilon(1e-9));
    CHECK(opt.steps() == 1);
}

TEST_CASE("select_report_epoch follows the MU floor rule") {
    bool warn = false;
    CHECK(select_report_epoch(std::vector<double>{0.75, 0.68, 0.62, 0.58, 0.50}, 0.6, &warn) == 3);
    CHECK_FALSE(warn);
    CHECK(select_report_epoch(std::vector<double>{0.70, 0.69, 0.66, 0.64, 0.61}, 0.6, &warn) == 5);
    CHECK_FALSE(warn);
    CHECK(select_report_epoch(std::vector<double>{0.55, 0.70, 0.70}, 0.6, &warn) == 1);
    CHECK(warn);
    // A recovery after a dip does not count.
    CHECK(select_report_epoch(std::vector<double>{0.7, 0.5, 0.7}, 0.6) == 1);
    CHECK(select_report_epoch(std::vector<double>{0.6, 0.6}, 0.6) == 2);
}

TEST_CASE("spearman handles ties and constant input") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    CHECK(spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman(x, std::vector<double>{1, 3, 2, 4, 5}) == doctest::Approx(0.9));
    // ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4)
    CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 2, 3}) ==
          doctest::Approx(0.9486832980505138));
    CHECK(spearman(x, std::vector<double>{2, 2, 2, 2, 2}) == 0.0);
}

TEST_CASE("run config serializes, hashes and validates") {
    UnlearnRunConfig c;
    c.method = Method::po;
    CHECK_THROWS(c.validate());
    c.po_variant = IdkVariant::reasoned_idk;
    CHECK_NOTHROW(c.validate());
    const auto back = UnlearnRunConfig::from_json(c.to_json());
    CHECK(back.hash() == c.hash());
    CHECK(back.label() == c.label());
    c.seed = 9;
    CHECK(c.hash() != back.hash());
    CHECK(UnlearnRunConfig::default_lr("forget01") == 1e-5);
    CHECK(UnlearnRunConfig::default_lr("forget10") == 2e-6);
    auto j = nlohmann::json(UnlearnRunConfig{}.to_json());
    j["lr"] = nullptr;
    j["forget_scale"] = "forget05";
    CHECK(UnlearnRunConfig::from_json(j).lr == 2e-6);
}

TEST_CASE("unlearning writes per-epoch artifacts and peaks the LR at the end of epoch 1") {
    RunFixture fx;
    cftest::TempDir dir;
    UnlearnTrace trace;
    const auto records = run_unlearning(fx.cfg, fx.target, fx.inputs, dir.str(), fake_scores, &trace);
    REQUIRE(records.size() == 3);
    CHECK(trace.steps_per_epoch == 2);
    CHECK(trace.lr_per_step.size() == 6);
    CHECK(records[0].lr_at_end == doctest::Approx(fx.cfg.lr));
    CHECK(trace.lr_per_step.front() == 0.0);
    for (int e = 0; e <= 3; ++e) CHECK(is_checkpoint(dir / ("epoch" + std::to_string(e))));
    CHECK(std::filesystem::exists(dir / "run.json"));
    const auto loaded = load_records(dir.str());
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[2].mu == doctest::Approx(0.7));
    CHECK(loaded[1].extra["epoch"] == 2);
    CHECK(load_checkpoint(dir / "epoch0").net.hash() == fx.target.net.hash());
    CHECK(load_checkpoint(dir / "epoch3").net.hash() != fx.target.net.hash());
    for (const auto& r : records) CHECK(std::abs(r.losses.total - r.losses.recompose()) < 1e-9);
}

TEST_CASE("identical configs reproduce identical loss curves") {
    RunFixture fx;
    fx.cfg.method = Method::gd;
    fx.cfg.max_epochs = 2;
    cftest::TempDir a, b;
    UnlearnTrace ta, tb;
    run_unlearning(fx.cfg, fx.target, fx.inputs, a.str(), nullptr, &ta);
    run_unlearning(fx.cfg, fx.target, fx.inputs, b.str(), nullptr, &tb);
    REQUIRE(ta.step_losses.size() == tb.step_losses.size());
    for (size_t i = 0; i < ta.step_losses.size(); ++i) {
        CHECK(std::abs(ta.step_losses[i].total - tb.step_losses[i].total) < 1e-5);
    }
    CHECK(load_checkpoint(a / "epoch2").net.hash() == load_checkpoint(b / "epoch2").net.hash());
}

TEST_CASE("micro-batching does not change the update") {
    RunFixture fx;
    fx.cfg.method = Method::gd;
    fx.cfg.max_epochs = 1;
    cftest::TempDir a, b;
    run_unlearning(fx.cfg, fx.target, fx.inputs, a.str(), nullptr);
    fx.cfg.micro_batch = 2;
    run_unlearning(fx.cfg, fx.target, fx.inputs, b.str(), nullptr);
    const auto pa = load_checkpoint(a / "epoch1").net.params();
    const auto pb = load_checkpoint(b / "epoch1").net.params();
    double worst = 0.0;
    for (size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, std::abs(pa[i] - pb[i]));
    CHECK(worst < 1e-9);
}

TEST_CASE("kl leaves the frozen target untouched; po and kl need their inputs") {
    RunFixture fx;
    fx.cfg.max_epochs = 1;
    cftest::TempDir dir;
    fx.cfg.method = Method::kl;
    CHECK_THROWS_AS(run_unlearning(fx.cfg, fx.target, fx.inputs, dir.str(), nullptr), ConfigError);
    const LanguageModel frozen = fx.target;
    fx.inputs.frozen = &frozen;
    UnlearnTrace trace;
    run_unlearning(fx.cfg, fx.target, fx.inputs, dir.str(), nullptr, &trace);
    CHECK(trace.frozen_hash_before == trace.frozen_hash_after);
    CHECK(trace.frozen_hash_after == fx.target.net.hash());

    fx.cfg.method = Method::po;
    fx.cfg.po_variant = IdkVariant::answer_idk;
    CHECK_THROWS_AS(run_unlearning(fx.cfg, fx.target, fx.inputs, dir.str(), nullptr), ConfigError);
    IdkVariantSpec spec;
    spec.idk_pool = {"I don't know."};
    fx.inputs.idk = &spec;
    CHECK_NOTHROW(run_unlearning(fx.cfg, fx.target, fx.inputs, dir.str(), nullptr));
}

TEST_CASE("fine-tuning lowers the training loss") {
    const auto corpus = cftest::mini_corpus();
    auto lm = cftest::tiny_model(cftest::corpus_texts(corpus), 16, 1, 2, 3);
    const auto data = corpus.splittable();
    FinetuneOptions o;
    o.epochs = 4;
    o.lr = 3e-3;
    o.batch_size = 4;
    o.micro_batch = 2;
    o.max_len = 128;
    const auto res = finetune_target(lm, data, o);
    REQUIRE(res.epoch_losses.size() == 4);
    CHECK(res.epoch_losses.back() < res.epoch_losses.front());
    o.epochs = 0;
    CHECK(finetune_target(lm, data, o).model.net.hash() == lm.net.hash());
}
