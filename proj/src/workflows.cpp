// SPDX-License-Identifier: Apache-2.0
#include "cotforget/workflows.hpp"

#include <filesystem>

#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/metrics.hpp"
#include "cotforget/probe.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

namespace fs = std::filesystem;

namespace {

ThinkMode mode_from(const Config& cfg, const std::string& name) {
    return ThinkMode::make(think_mode_from_string(name), chat_template_from(cfg),
                           cfg.at("decoding.less_think_phrase").get<std::string>());
}

RunManifest manifest_for(const Config& cfg, const Corpus& corpus, std::map<std::string, std::string> providers) {
    RunManifest m;
    m.config_hash = cfg.hash();
    m.corpus_hash = corpus.content_hash();
    m.code_version = code_version();
    m.provider_ids = std::move(providers);
    m.created_at = m.updated_at = utc_timestamp();
    return m;
}

// Everything provider-backed evaluation needs, owned in one place.
struct EvalKit {
    TemplateRegistry templates;
    std::unique_ptr<ResponseCache> cache;
    std::unique_ptr<LLMEndpoint> judge_endpoint;
    std::unique_ptr<PromptClient> judge;
    std::unique_ptr<EmbeddingProvider> embedder;
    std::unique_ptr<NliProvider> nli;

    explicit EvalKit(const Config& cfg) {
        templates = TemplateRegistry::load(templates_dir_from(cfg));
        cache = std::make_unique<ResponseCache>(cfg.at("paths.cache_dir").get<std::string>());
        const auto judge_name = cfg.at("metrics.judge").get<std::string>();
        if (!judge_name.empty()) {
            judge_endpoint = make_endpoint(cfg, judge_name, templates);
            judge = std::make_unique<PromptClient>(*judge_endpoint, *cache, templates);
        }
        embedder = make_embedder(cfg);
        nli = make_nli(cfg);
    }

    Providers providers() const { return {embedder.get(), nli.get(), judge.get()}; }

    std::map<std::string, std::string> ids() const {
        std::map<std::string, std::string> m{{"embedder", embedder->id()}, {"nli", nli->id()}};
        if (judge_endpoint) m["judge"] = judge_endpoint->id();
        return m;
    }
};

EvalOptions eval_options_from(const Config& cfg) {
    EvalOptions o;
    o.decode = decode_params_from(cfg);
    o.one_to_one_steps = cfg.at("metrics.one_to_one_steps").get<bool>();
    return o;
}

nlohmann::json forget_extra(const MetricReport& report) {
    nlohmann::json extra = nlohmann::json::object();
    const auto& f = report.set("forget");
    for (const auto& [k, v] : f.per_set) extra["forget_" + k] = v;
    extra["judge_unscored"] = f.judge_unscored;
    return extra;
}

}  // namespace

void write_summary(const std::string& out_dir, const nlohmann::json& summary) {
    write_file_atomic(out_dir + "/summary.json", summary.dump(2) + "\n");
}

LanguageModel init_model(const Corpus& corpus, const Config& cfg) {
    if (corpus.empty()) throw ValidationError("cannot build a tokenizer from an empty corpus");
    LanguageModel lm;
    lm.chat = chat_template_from(cfg);
    std::vector<std::string> texts;
    for (const auto& ex : corpus) {
        texts.push_back(ex.question);
        texts.push_back(ex.cot);
        texts.push_back(ex.answer);
    }
    for (const auto& r : refusal_pool_from(cfg)) texts.push_back(r);
    texts.push_back(cfg.at("decoding.less_think_phrase").get<std::string>());
    lm.tokenizer = Tokenizer::build(texts, lm.chat.specials(), cfg.at("tokenizer.max_words").get<size_t>());
    const auto mc = model_config_from(cfg, lm.tokenizer.vocab_size());
    lm.net = TinyLM(mc, cfg.at("model.seed").get<std::uint64_t>());
    return lm;
}

std::map<std::string, double> answer_rouge_by_split(const LanguageModel& lm, const Corpus& corpus,
                                                    const DecodeParams& params, size_t subset) {
    std::map<std::string, std::pair<double, size_t>> acc;
    const ThinkMode mode{};
    for (const auto& ex : corpus) {
        auto& [sum, n] = acc[std::string(to_string(ex.split))];
        if (subset > 0 && n >= subset) continue;
        sum += rouge_l_recall(ex.answer, generate(lm, ex.question, mode, params).answer);
        ++n;
    }
    std::map<std::string, double> out;
    for (const auto& [k, v] : acc) out[k] = v.first / static_cast<double>(v.second);
    return out;
}

nlohmann::json FinetuneSummary::to_json() const {
    return {{"epoch_losses", epoch_losses},
            {"rouge_before", rouge_before},
            {"rouge_after", rouge_after},
            {"param_hash", model.net.hash()},
            {"num_params", model.net.num_params()}};
}

FinetuneSummary run_finetune(const LanguageModel& init, const Corpus& corpus, const Config& cfg,
                             const std::string& out_dir) {
    const auto& f = cfg.at("finetune");
    FinetuneOptions o;
    o.epochs = f.value("epochs", o.epochs);
    o.lr = f.value("lr", o.lr);
    o.batch_size = f.value("batch_size", o.batch_size);
    o.micro_batch = f.value("micro_batch", o.micro_batch);
    o.weight_decay = f.value("weight_decay", o.weight_decay);
    o.seed = f.value("seed", o.seed);
    o.max_len = init.net.config().max_len;
    o.last_good_dir = out_dir + "/last_good";

    std::vector<ReasoningExample> data = corpus.splittable();
    if (f.value("include_utility_sets", false)) {
        for (auto s : {Split::real_authors, Split::world_facts}) {
            const auto v = corpus.with_split(s);
            data.insert(data.end(), v.begin(), v.end());
        }
    }
    const auto params = decode_params_from(cfg);
    const auto subset = cfg.at("metrics.eval_subset").get<size_t>();
    FinetuneSummary s;
    s.rouge_before = answer_rouge_by_split(init, corpus, params, subset);
    auto res = finetune_target(init, data, o);
    s.model = std::move(res.model);
    s.epoch_losses = std::move(res.epoch_losses);
    s.rouge_after = answer_rouge_by_split(s.model, corpus, params, subset);
    save_checkpoint(s.model, out_dir);
    return s;
}

UnlearnRunConfig unlearn_config_from(const Config& cfg) {
    const auto& u = cfg.at("unlearn");
    nlohmann::json j = {{"method", u.at("method")},
                        {"strategy", u.at("strategy")},
                        {"po_variant", u.value("po_variant", nlohmann::json())},
                        {"forget_scale", u.at("scale")},
                        {"lr", u.value("lr", nlohmann::json())},
                        {"weight_decay", u.at("weight_decay")},
                        {"effective_batch", u.at("effective_batch")},
                        {"micro_batch", u.at("micro_batch")},
                        {"max_epochs", u.at("max_epochs")},
                        {"mu_floor", u.at("mu_floor")},
                        {"seed", u.at("seed")},
                        {"kl_response_only", u.at("kl_response_only")},
                        {"po_retain_strategy", u.at("po_retain_strategy")},
                        {"max_len", cfg.at("model.max_len")}};
    auto c = UnlearnRunConfig::from_json(j);
    c.validate();
    return c;
}

nlohmann::json UnlearnSummary::to_json() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) recs.push_back(r.to_json());
    return {{"run_dir", run_dir},
            {"selected_epoch", selected_epoch},
            {"selection_warning", selection_warning},
            {"records", recs},
            {"manifest", manifest.to_json()}};
}

UnlearnSummary run_unlearn(const Config& cfg, const Corpus& corpus, const LanguageModel& target,
                           const std::string& runs_dir) {
    auto ucfg = unlearn_config_from(cfg);
    ucfg.model_id = "tinylm-" + target.net.hash().substr(0, 12);
    const auto split = make_split(corpus, UnlearnRunConfig::fraction_of(ucfg.forget_scale),
                                  cfg.at("unlearn.split_seed").get<std::uint64_t>());
    const Corpus split_corpus = apply_split(corpus, split);

    UnlearnSummary summary;
    summary.run_dir = runs_dir + "/" + ucfg.hash();
    const auto& run_dir = summary.run_dir;
    fs::create_directories(run_dir);
    write_file_atomic(run_dir + "/split.json", split.to_json().dump(2) + "\n");
    save_corpus(split_corpus, run_dir + "/corpus.jsonl");
    write_file_atomic(run_dir + "/config.json", cfg.json().dump(2) + "\n");

    EvalKit kit(cfg);
    summary.manifest = manifest_for(cfg, split_corpus, kit.ids());
    const auto sets = EvalSets::from_corpus(split_corpus, cfg.at("metrics.eval_subset").get<size_t>());
    const auto mode = mode_from(cfg, cfg.at("decoding.eval_mode").get<std::string>());
    const auto opts = eval_options_from(cfg);
    const double eps = cfg.at("metrics.epsilon").get<double>();
    const std::vector<ThinkMode> modes{mode};
    const auto baseline = snapshot_baseline(target, sets, modes, opts.decode);
    baseline.save(run_dir + "/baseline.jsonl");

    auto score = [&](const LanguageModel& lm, const std::string& dir) {
        auto report = evaluate_checkpoint(lm, sets, baseline, kit.providers(), mode, opts);
        const auto agg = aggregate(report, eps);
        auto rj = report.to_json();
        rj["manifest"] = summary.manifest.to_json();
        write_file_atomic(dir + "/report.json", rj.dump(2) + "\n");
        write_file_atomic(dir + "/aggregate.json", agg.to_json().dump(2) + "\n");
        return EpochScores{agg.mu, agg.afe, agg.cfe, forget_extra(report)};
    };

    IdkVariantSpec idk;
    UnlearnInputs inputs;
    inputs.forget = split_corpus.with_split(Split::forget);
    inputs.retain = split_corpus.with_split(Split::retain);
    if (ucfg.method == Method::po) {
        idk.variant = *ucfg.po_variant;
        idk.idk_pool = refusal_pool_from(cfg);
        if (idk.variant == IdkVariant::reasoned_idk) {
            const auto path = cfg.at("unlearn.reasoned_traces").get<std::string>();
            if (!path.empty()) {
                idk.reasoned_traces =
                    nlohmann::json::parse(read_file(path)).get<std::map<std::string, std::string>>();
            } else {
                auto ep = make_endpoint(cfg, cfg.at("unlearn.reasoner").get<std::string>(), kit.templates);
                PromptClient client(*ep, *kit.cache, kit.templates);
                for (const auto& ex : inputs.forget) {
                    idk.reasoned_traces[ex.id] = generate_reasoned_idk(ex.question, ex.answer, client,
                                                                       target.chat.think_open, target.chat.think_close);
                }
            }
            write_file_atomic(run_dir + "/reasoned_traces.json", nlohmann::json(idk.reasoned_traces).dump(2) + "\n");
        }
        inputs.idk = &idk;
    }
    LanguageModel frozen;
    if (ucfg.method == Method::kl) {
        frozen = target;
        inputs.frozen = &frozen;
    }

    fs::create_directories(run_dir + "/epoch0");
    const auto target_scores = score(target, run_dir + "/epoch0");
    log::info("target: MU " + std::to_string(target_scores.mu) + " AFE " + std::to_string(target_scores.afe) +
              " CFE " + std::to_string(target_scores.cfe));

    summary.records = run_unlearning(ucfg, target, inputs, run_dir,
                                     [&](int, const LanguageModel& lm, const std::string& dir) { return score(lm, dir); });
    summary.selected_epoch = select_report_epoch(summary.records, ucfg.mu_floor, &summary.selection_warning);
    summary.manifest.updated_at = utc_timestamp();
    auto j = summary.to_json();
    j["config"] = ucfg.to_json();
    j["target"] = {{"mu", target_scores.mu}, {"afe", target_scores.afe}, {"cfe", target_scores.cfe},
                   {"extra", target_scores.extra}};
    write_summary(run_dir, j);
    return summary;
}

nlohmann::json run_evaluate(const Config& cfg, const LanguageModel& lm, const Corpus& corpus,
                            const std::string& baseline_path, const std::string& out_dir) {
    if (!fs::exists(baseline_path)) {
        throw ValidationError("no pre-unlearning outputs at " + baseline_path +
                              "; run `evaluate --snapshot-baseline` against the target checkpoint first");
    }
    const auto baseline = BaselineOutputs::load(baseline_path);
    EvalKit kit(cfg);
    const auto sets = EvalSets::from_corpus(corpus, cfg.at("metrics.eval_subset").get<size_t>());
    const auto mode = mode_from(cfg, cfg.at("decoding.eval_mode").get<std::string>());
    const auto report = evaluate_checkpoint(lm, sets, baseline, kit.providers(), mode, eval_options_from(cfg));
    const auto agg = aggregate(report, cfg.at("metrics.epsilon").get<double>());
    fs::create_directories(out_dir);
    const auto manifest = manifest_for(cfg, corpus, kit.ids());
    auto rj = report.to_json();
    rj["manifest"] = manifest.to_json();
    write_file_atomic(out_dir + "/report.json", rj.dump(2) + "\n");
    write_file_atomic(out_dir + "/aggregate.json", agg.to_json().dump(2) + "\n");
    return {{"mu", agg.mu}, {"afe", agg.afe}, {"cfe", agg.cfe}, {"avg", agg.avg()}, {"manifest", manifest.to_json()}};
}

nlohmann::json run_probe(const Config& cfg, const std::string& run_dir, const std::vector<std::string>& modes,
                         const std::string& out_dir) {
    nlohmann::json run;
    try {
        run = nlohmann::json::parse(read_file(run_dir + "/run.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(run_dir + "/run.json: " + e.what());
    }
    const auto ucfg = UnlearnRunConfig::from_json(run.at("config"));
    const auto corpus = load_corpus(run_dir + "/corpus.jsonl");
    const auto forget = corpus.with_split(Split::forget);
    std::vector<ThinkMode> tm;
    for (const auto& m : modes) tm.push_back(mode_from(cfg, m));
    std::vector<std::pair<int, std::string>> ckpts;
    for (int e = 0; e <= ucfg.max_epochs; ++e) ckpts.emplace_back(e, run_dir + "/epoch" + std::to_string(e));
    auto embedder = make_embedder(cfg);
    const auto res = probe_decoding(ckpts, forget, tm, *embedder, decode_params_from(cfg));
    write_probe_outputs(res, out_dir);
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : res.points) {
        pts.push_back({{"mode", p.mode},
                       {"epoch", p.epoch},
                       {"rouge", p.rouge ? nlohmann::json(*p.rouge) : nlohmann::json()},
                       {"cs", p.cs ? nlohmann::json(*p.cs) : nlohmann::json()}});
    }
    return {{"run_dir", run_dir}, {"points", pts}, {"missing_epochs", res.missing_epochs},
            {"embedder", embedder->id()}};
}

nlohmann::json run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                          std::optional<double> mu_floor) {
    if (run_dirs.empty()) throw ValidationError("report needs at least one run directory");
    std::vector<GridRow> rows;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& dir : run_dirs) {
        nlohmann::json run;
        try {
            run = nlohmann::json::parse(read_file(dir + "/run.json"));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(dir + "/run.json: " + e.what());
        }
        const auto ucfg = UnlearnRunConfig::from_json(run.at("config"));
        const auto records = load_records(dir);
        bool warning = false;
        const int epoch = select_report_epoch(records, mu_floor.value_or(ucfg.mu_floor), &warning);
        const auto& r = records[static_cast<size_t>(epoch - 1)];
        GridRow row;
        row.method = to_string(ucfg.method);
        row.strategy = ucfg.method == Method::po && ucfg.po_variant ? std::string(to_string(*ucfg.po_variant))
                                                                    : std::string(to_string(ucfg.strategy));
        row.scale = ucfg.forget_scale;
        row.epoch = epoch;
        row.mu = r.mu;
        row.afe = r.afe;
        row.cfe = r.cfe;
        rows.push_back(row);
        runs.push_back({{"run_dir", dir}, {"epoch", epoch}, {"warning", warning}});
    }
    fs::create_directories(out_dir);
    write_file_atomic(out_dir + "/grid.csv", render_grid_csv(rows));
    write_file_atomic(out_dir + "/grid.txt", render_grid_text(rows));
    return {{"runs", runs}, {"grid_csv", out_dir + "/grid.csv"}, {"grid_txt", out_dir + "/grid.txt"}};
}

}  // namespace cotforget
