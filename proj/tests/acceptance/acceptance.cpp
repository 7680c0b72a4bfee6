// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance [work_dir]   (default ./acceptance_run)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cotforget/aggregation.hpp"
#include "cotforget/config.hpp"
#include "cotforget/decoding.hpp"
#include "cotforget/log.hpp"
#include "cotforget/metrics.hpp"
#include "cotforget/objectives.hpp"
#include "cotforget/text.hpp"
#include "cotforget/trainer.hpp"
#include "cotforget/workflows.hpp"
#include "../oracles.hpp"
#include "../support.hpp"

using namespace cotforget;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kFdRelTol = 1e-4;
constexpr double kAlgebraTol = 1e-6;
constexpr double kKlHandValue = 0.143841;
constexpr double kDecompositionTol = 1e-6;
constexpr double kMetricSeconds = 5.0;
constexpr double kGradientSeconds = 60.0;
constexpr double kSmokeSeconds = 60.0 * 60.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
    return s;
}

// 1. rouge_l_recall against subset-enumeration LCS on random token sequences.
Outcome metric_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> len(1, 12), sym(0, 5);
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        std::vector<std::string> a(len(rng)), b(len(rng));
        for (auto& t : a) t = "w" + std::to_string(sym(rng));
        for (auto& t : b) t = "w" + std::to_string(sym(rng));
        const double expected = static_cast<double>(cftest::brute_force_lcs(a, b)) / static_cast<double>(a.size());
        if (rouge_l_recall(join(a), join(b)) != expected) ++mismatches;
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < kMetricSeconds,
            "100 sequences, " + std::to_string(mismatches) + " mismatches, " + fmt(secs, 3) + " s"};
}

// 2. Step-wise scores diverge from full-sequence scores in the expected directions.
Outcome stepwise_fixtures() {
    const std::vector<std::string> truth{"first we recall where the author was born",
                                         "then we compare two archival records",
                                         "finally we conclude the city was Lisbon"};
    const std::vector<std::string> reordered{truth[2], truth[0], truth[1]};
    const double full_r = rouge_l_recall(join(truth), join(reordered));
    const double step_r = stepwise_score(truth, reordered, StepMetric::rouge).score;

    HashedBowEmbedder emb;
    const std::vector<std::string> gt{
        "The author Jane Smith was born in the old harbor city of Boston in the state of Massachusetts and grew "
        "up near the harbor city docks of Boston.",
        "She likes tea.", "Her father flew planes."};
    const std::vector<std::string> gen{gt[0], "Birds migrate south.", "Rain falls often."};
    const double full_c = cosine_similarity(join(gt), join(gen), emb);
    const double step_c = stepwise_score(gt, gen, StepMetric::cosine, &emb).score;
    return {step_r > full_r && step_c < full_c, "reordered: stepwise ROUGE " + fmt(step_r, 4) + " > full " +
                                                    fmt(full_r, 4) + "; shared opening: stepwise CS " +
                                                    fmt(step_c, 4) + " < full " + fmt(full_c, 4)};
}

struct ToyObjectives {
    Corpus corpus = cftest::mini_corpus();
    LanguageModel lm = cftest::tiny_model(cftest::corpus_texts(corpus), 16, 2, 2, 31);
    std::vector<ReasoningExample> reasoning = corpus.splittable();

    std::vector<TrainSequence> batch(Strategy s, const std::vector<size_t>& idx) const {
        std::vector<TrainSequence> out;
        for (auto i : idx) out.push_back(make_sequence(reasoning[i], s, lm.chat, lm.tokenizer, 128));
        return out;
    }
};

// 3. Masked positions get zero gradient; total gradient matches finite differences.
Outcome mask_gradient_suite() {
    const auto t0 = Clock::now();
    ToyObjectives toy;
    const size_t n_params = toy.lm.net.num_params();
    const auto forget = toy.batch(Strategy::cot_only, {0, 7});
    const auto retain = toy.batch(Strategy::answer_only, {3, 12});
    auto frozen = toy.lm.net;
    for (auto& p : frozen.params()) p *= 0.95;

    const std::vector<std::pair<std::string, cftest::Objective>> objectives{
        {"ga", [&](GradientSink* s) { return ga_loss(forget, toy.lm.net, s); }},
        {"gd", [&](GradientSink* s) { return gd_loss(forget, retain, toy.lm.net, s); }},
        {"kl", [&](GradientSink* s) { return kl_loss(forget, retain, toy.lm.net, &frozen, s); }},
        {"po", [&](GradientSink* s) { return po_loss(retain, forget, toy.lm.net, s); }},
    };
    const auto scored = [&](LossRole role, size_t i, int t) {
        if (role == LossRole::forget) return static_cast<bool>(forget[i].mask.mask[t]);
        if (role == LossRole::retain) return static_cast<bool>(retain[i].mask.mask[t]);
        const auto& r = retain[i].rendered;
        return r.think.contains(t) || r.answer.contains(t);
    };
    long leaks = 0;
    double worst_fd = 0.0;
    for (const auto& [name, obj] : objectives) {
        leaks += cftest::leaked_gradient_entries(obj, n_params, scored);
        worst_fd = std::max(worst_fd, cftest::finite_difference_error(toy.lm.net, obj, 53));
    }
    const double secs = seconds_since(t0);
    const bool ok = n_params <= 1'000'000 && leaks == 0 && worst_fd < kFdRelTol && secs < kGradientSeconds;
    return {ok, std::to_string(n_params) + " params, masked non-zeros " + std::to_string(leaks) +
                    ", worst FD rel err " + fmt(worst_fd, 3) + ", " + fmt(secs, 3) + " s"};
}

// 4. Totals recompose; KL at identity and on the hand-computed case.
Outcome loss_algebra() {
    ToyObjectives toy;
    const auto forget = toy.batch(Strategy::cot_and_answer, {1, 2, 3});
    const auto retain = toy.batch(Strategy::cot_and_answer, {10, 11, 12});
    const auto ga = ga_loss(forget, toy.lm.net);
    const auto gd = gd_loss(forget, retain, toy.lm.net);
    const auto po = po_loss(retain, forget, toy.lm.net);
    const double e_ga = std::abs(ga.total - (-ga.forget_term));
    const double e_gd = std::abs(gd.total - (-gd.forget_term + gd.retain_term));
    const double e_po = std::abs(po.total - (po.retain_term + po.forget_term));
    const double kl_id = kl_loss(forget, retain, toy.lm.net, &toy.lm.net).kl_term;
    Eigen::RowVectorXd p(2), q(2);
    p << 0.0, 0.0;
    q << std::log(0.25), std::log(0.75);
    const double hand = kl_divergence(p, q);
    const bool ok = e_ga < kAlgebraTol && e_gd < kAlgebraTol && e_po < kAlgebraTol && std::abs(kl_id) < kAlgebraTol &&
                    std::abs(hand - kKlHandValue) < kAlgebraTol;
    return {ok, "recomposition errors ga " + fmt(e_ga, 2) + " gd " + fmt(e_gd, 2) + " po " + fmt(e_po, 2) +
                    "; KL identity " + fmt(kl_id, 2) + "; KL two-class " + fmt(hand, 8)};
}

// 5. Harmonic mean properties and published Avg. column rows.
Outcome aggregation() {
    bool identity = true;
    for (double v : {0.1, 0.37, 0.6, 1.0}) {
        identity &= std::abs(harmonic_mean(std::vector<double>(4, v)) - v) < 1e-12;
    }
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(1 + i % 12);
        double am = 0.0;
        for (auto& x : v) am += (x = u(rng));
        am /= static_cast<double>(v.size());
        if (harmonic_mean(v) > am + 1e-12) ++violations;
    }
    struct Row {
        double mu, afe, cfe, avg;
    };
    const Row rows[] = {{0.6309, 0.3802, 0.4301, 0.4804}, {0.6507, 0.3698, 0.1838, 0.4014},
                        {0.7058, 0.5688, 0.4608, 0.5785}};
    int row_hits = 0;
    for (const auto& r : rows) {
        row_hits += round4(GridRow{"", "", "", 0, r.mu, r.afe, r.cfe}.avg()) == r.avg;
    }
    return {identity && violations == 0 && row_hits == 3,
            "HM identity " + std::string(identity ? "ok" : "broken") + ", HM>AM violations " +
                std::to_string(violations) + "/1000, Avg. rows matched " + std::to_string(row_hits) + "/3"};
}

// 6. cot_and_answer forget term = token-weighted mean of cot_only and answer_only terms.
Outcome strategy_decomposition() {
    ToyObjectives toy;
    std::mt19937_64 rng(66);
    std::uniform_int_distribution<size_t> pick(0, toy.reasoning.size() - 1), size(1, 4);
    double worst = 0.0;
    for (int b = 0; b < 50; ++b) {
        std::vector<size_t> idx(size(rng));
        for (auto& i : idx) i = pick(rng);
        const auto both = ga_loss(toy.batch(Strategy::cot_and_answer, idx), toy.lm.net);
        const auto cot = ga_loss(toy.batch(Strategy::cot_only, idx), toy.lm.net);
        const auto ans = ga_loss(toy.batch(Strategy::answer_only, idx), toy.lm.net);
        double mean = 0.0;
        for (size_t s = 0; s < idx.size(); ++s) {
            const double nc = static_cast<double>(cot.forget_tokens_per_sequence[s]);
            const double na = static_cast<double>(ans.forget_tokens_per_sequence[s]);
            mean += (nc * cot.forget_per_sequence[s] + na * ans.forget_per_sequence[s]) / (nc + na);
        }
        mean /= static_cast<double>(idx.size());
        worst = std::max(worst, std::abs(both.forget_term - mean));
    }
    return {worst < kDecompositionTol, "50 batches, worst deviation " + fmt(worst, 3)};
}

// 7. zero_think yields an empty cot and every prefill appears verbatim at the head of raw output.
Outcome probe_contract(const std::vector<const LanguageModel*>& models) {
    const auto corpus = cftest::mini_corpus();
    int total = 0, zero_ok = 0, prefill_ok = 0, zero_total = 0;
    DecodeParams dp;
    dp.max_new_tokens = 24;
    for (const auto* lm : models) {
        for (auto kind : {ThinkModeKind::zero_think, ThinkModeKind::less_think}) {
            const auto mode = ThinkMode::make(kind, lm->chat);
            for (const auto& ex : corpus) {
                const auto g = generate(*lm, ex.question, mode, dp);
                ++total;
                prefill_ok += g.raw.compare(0, mode.prefill.size(), mode.prefill) == 0;
                if (kind == ThinkModeKind::zero_think) {
                    ++zero_total;
                    zero_ok += g.cot.empty();
                }
            }
        }
    }
    return {total > 0 && prefill_ok == total && zero_ok == zero_total,
            "zero_think empty cot " + std::to_string(zero_ok) + "/" + std::to_string(zero_total) +
                ", prefill verbatim " + std::to_string(prefill_ok) + "/" + std::to_string(total)};
}

// Settings for the end-to-end smoke run: a ~2M parameter model, forget10 of a
// 20-example corpus (one author), gradient ascent on the cot only.
Config smoke_config(const std::string& work) {
    auto cfg = Config::load();
    cfg.merge(nlohmann::json{
        {"paths", {{"cache_dir", work + "/cache"}, {"runs_dir", work + "/runs"}}},
        {"model", {{"d_model", 256}, {"n_layers", 2}, {"n_heads", 4}, {"d_ff", 1024}, {"max_len", 160},
                   {"init_std", 0.02}, {"seed", 1}}},
        {"finetune", {{"epochs", 30}, {"lr", 1e-3}, {"batch_size", 4}, {"micro_batch", 4}, {"weight_decay", 0.0},
                      {"include_utility_sets", true}}},
        {"unlearn", {{"method", "ga"}, {"strategy", "cot_only"}, {"scale", "forget10"}, {"lr", 2e-4},
                     {"effective_batch", 1}, {"micro_batch", 1}, {"max_epochs", 5}}},
        {"decoding", {{"max_new_tokens", 60}}},
    });
    return cfg;
}

struct SmokeState {
    LanguageModel target;
    bool have_target = false;
};

// 8. Fine-tune raises forget ROUGE; GA/cot_only lowers forget step-wise ROUGE; all artifacts exist.
Outcome smoke(const std::string& work, SmokeState& state) {
    const auto t0 = Clock::now();
    fs::remove_all(work);
    fs::create_directories(work);
    const auto cfg = smoke_config(work);
    const auto raw_corpus = cftest::mini_corpus();
    const auto split = make_split(raw_corpus, 0.10, cfg.at("unlearn.split_seed").get<std::uint64_t>());
    const auto corpus = apply_split(raw_corpus, split);

    const auto init = init_model(corpus, cfg);
    const auto ft = run_finetune(init, corpus, cfg, work + "/target");
    write_summary(work + "/target", ft.to_json());
    state.target = ft.model;
    state.have_target = true;
    const double before = ft.rouge_before.at("forget");
    const double after = ft.rouge_after.at("forget");
    const double ft_secs = seconds_since(t0);

    const auto un = run_unlearn(cfg, corpus, ft.model, cfg.at("paths.runs_dir").get<std::string>());
    const auto probe = run_probe(cfg, un.run_dir, {"default", "zero", "less"}, un.run_dir + "/probe");

    std::vector<double> epochs{0.0}, sw{};
    const auto e0 = nlohmann::json::parse(read_file(un.run_dir + "/epoch0/report.json"));
    sw.push_back(e0["sets"]["forget"]["per_set"]["sw_rouge"].get<double>());
    for (const auto& r : un.records) {
        epochs.push_back(r.epoch);
        sw.push_back(r.extra.at("forget_sw_rouge").get<double>());
    }
    const double rho = spearman(epochs, sw);

    std::vector<std::string> missing;
    for (const char* f : {"records.json", "run.json", "summary.json", "baseline.jsonl", "probe/curves.csv",
                          "probe/rouge.svg", "probe/cs.svg"}) {
        if (!fs::exists(fs::path(un.run_dir) / f)) missing.push_back(f);
    }
    for (int e = 0; e <= 5; ++e) {
        for (const char* f : {"report.json", "aggregate.json", "params.bin"}) {
            const auto p = fs::path(un.run_dir) / ("epoch" + std::to_string(e)) / f;
            if (!fs::exists(p)) missing.push_back(p.lexically_relative(un.run_dir).string());
        }
    }
    const bool records_ok = un.records.size() == 5 && load_records(un.run_dir).size() == 5;

    std::string series;
    for (double v : sw) series += (series.empty() ? "" : ",") + fmt(v, 3);
    const double secs = seconds_since(t0);
    const long n_params = static_cast<long>(ft.model.net.num_params());
    const bool ok = n_params >= 1'000'000 && n_params <= 10'000'000 && after > before && rho < 0.0 &&
                    missing.empty() && records_ok && secs < kSmokeSeconds;
    std::string detail = std::to_string(n_params) + " params; forget ROUGE " + fmt(before, 3) + " -> " +
                         fmt(after, 3) + " after fine-tune (" + fmt(ft_secs, 3) + " s); forget step-wise ROUGE by "
                         "epoch 0..5 [" + series + "], Spearman " + fmt(rho, 3) + "; selected epoch " +
                         std::to_string(un.selected_epoch) + "; probe points " +
                         std::to_string(probe["points"].size()) + "; missing artifacts " +
                         std::to_string(missing.size()) + "; " + fmt(secs, 4) + " s CPU";
    for (const auto& m : missing) detail += " [" + m + "]";
    return {ok, detail};
}

// 9. Epoch selection on the MU fixtures.
Outcome epoch_selection() {
    bool w1 = true, w2 = true, w3 = false;
    const int a = select_report_epoch(std::vector<double>{0.75, 0.68, 0.62, 0.58, 0.50}, 0.6, &w1);
    const int b = select_report_epoch(std::vector<double>{0.71, 0.69, 0.66, 0.64, 0.61}, 0.6, &w2);
    const int c = select_report_epoch(std::vector<double>{0.55, 0.70, 0.66, 0.64, 0.62}, 0.6, &w3);
    return {a == 3 && b == 5 && c == 1 && !w1 && !w2 && w3,
            "selected {" + std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c) + "}" +
                (w3 ? ", warning raised for the sub-floor first epoch" : ", no warning for the sub-floor first epoch")};
}

Outcome guarded(const std::function<Outcome()>& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::string work = argc > 1 ? argv[1] : "acceptance_run";
    log::set_level(log::Level::warn);
    SmokeState state;

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"metric oracle equivalence", metric_oracle},
        {"step-wise divergence fixtures", stepwise_fixtures},
        {"mask/gradient suite", mask_gradient_suite},
        {"loss algebra", loss_algebra},
        {"aggregation", aggregation},
        {"strategy decomposition", strategy_decomposition},
        {"end-to-end smoke", [&] { return smoke(work, state); }},
        {"decoding probe contract",
         [&] {
             const auto toy = cftest::tiny_model(cftest::corpus_texts(cftest::mini_corpus()), 16, 1, 2, 8);
             std::vector<const LanguageModel*> models{&toy};
             if (state.have_target) models.push_back(&state.target);
             return probe_contract(models);
         }},
        {"epoch-selection rule", epoch_selection},
    };
    // Printed in criterion order; the smoke runs before the probe check so the
    // probe contract also covers the fine-tuned model.
    const int order[] = {1, 2, 3, 4, 5, 6, 8, 7, 9};
    std::vector<std::pair<int, Outcome>> results;
    for (size_t i = 0; i < criteria.size(); ++i) {
        results.emplace_back(order[i], guarded(criteria[i].second));
    }
    std::sort(results.begin(), results.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    int failures = 0;
    for (const auto& [n, o] : results) {
        std::string name;
        for (size_t i = 0; i < criteria.size(); ++i) {
            if (order[i] == n) name = criteria[i].first;
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << o.detail << std::endl;
        failures += !o.pass;
    }
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
