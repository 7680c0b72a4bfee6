// SPDX-License-Identifier: Apache-2.0
// Command-line entry point. Exit codes: 0 success, 1 validation/config/usage
// error, 2 transport error.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "cotforget/construction.hpp"
#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/text.hpp"
#include "cotforget/workflows.hpp"

namespace fs = std::filesystem;
using namespace cotforget;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string log_level = "info";
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "JSON config file merged over the shipped defaults");
    sub->add_option("--set", c.sets, "Override a config key, e.g. --set unlearn.lr=1e-5")->take_all();
    sub->add_option("--log-level", c.log_level, "debug, info, warn or error");
}

Config load_config(const Common& c) {
    auto cfg = Config::load(c.config_path);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void apply_log_level(const std::string& level) {
    if (level == "debug") log::set_level(log::Level::debug);
    else if (level == "info") log::set_level(log::Level::info);
    else if (level == "warn") log::set_level(log::Level::warn);
    else if (level == "error") log::set_level(log::Level::error);
    else throw ConfigError("unknown log level: " + level);
}

int exit_code_for(const Error& e) { return e.kind() == ErrorKind::transport ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fine-tune, unlearn and evaluate reasoning language models"};
    app.require_subcommand(1);
    Common common;

    // build-dataset
    auto* build = app.add_subcommand("build-dataset", "Construct a reasoning corpus with LLM endpoints");
    add_common(build, common);
    std::string authors, tofu, out_dir, endpoint, reasoner;
    build->add_option("--authors", authors, "JSONL mapping of fictitious to real authors")->required();
    build->add_option("--tofu", tofu, "JSONL of source question/answer pairs")->required();
    build->add_option("--out", out_dir, "Output directory")->required();
    build->add_option("--endpoint", endpoint, "Endpoint for question rewriting and CoT generation");
    build->add_option("--reasoner", reasoner, "Reasoning endpoint for real-author traces");

    // finetune
    auto* ft = app.add_subcommand("finetune", "Fine-tune the target model on a corpus");
    add_common(ft, common);
    std::string corpus_path, init_ckpt, ft_out;
    std::optional<int> ft_epochs;
    std::optional<double> ft_lr;
    ft->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
    ft->add_option("--init", init_ckpt, "Starting checkpoint (default: fresh random model)");
    ft->add_option("--out", ft_out, "Checkpoint output directory")->required();
    ft->add_option("--epochs", ft_epochs, "finetune.epochs");
    ft->add_option("--lr", ft_lr, "finetune.lr");

    // unlearn
    auto* ul = app.add_subcommand("unlearn", "Run an unlearning job with per-epoch evaluation");
    add_common(ul, common);
    std::string method, strategy, scale, po_variant, target_ckpt, runs_dir, ul_corpus;
    std::optional<double> ul_lr;
    std::optional<int> ul_epochs;
    ul->add_option("--method", method, "ga, gd, kl or po");
    ul->add_option("--strategy", strategy, "cot_and_answer, answer_only or cot_only");
    ul->add_option("--scale", scale, "forget01, forget05 or forget10");
    ul->add_option("--po-variant", po_variant, "answer_idk, direct_idk or reasoned_idk");
    ul->add_option("--target", target_ckpt, "Fine-tuned target checkpoint")->required();
    ul->add_option("--corpus", ul_corpus, "Corpus JSONL")->required();
    ul->add_option("--runs", runs_dir, "Runs root (default paths.runs_dir)");
    ul->add_option("--lr", ul_lr, "unlearn.lr");
    ul->add_option("--epochs", ul_epochs, "unlearn.max_epochs");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint, or snapshot target outputs as a baseline");
    add_common(ev, common);
    std::string ev_ckpt, ev_corpus, baseline, ev_out, snapshot;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory")->required();
    ev->add_option("--corpus", ev_corpus, "Corpus JSONL with forget/retain splits")->required();
    ev->add_option("--baseline", baseline, "Pre-unlearning outputs (JSONL)");
    ev->add_option("--out", ev_out, "Output directory");
    ev->add_option("--snapshot-baseline", snapshot, "Write this checkpoint's outputs to the given JSONL and exit");

    // probe-decoding
    auto* pr = app.add_subcommand("probe-decoding", "Leakage curves under think-control decoding modes");
    add_common(pr, common);
    std::string run_dir, modes_arg = "default,zero,less", pr_out;
    pr->add_option("--run", run_dir, "Run directory produced by unlearn")->required();
    pr->add_option("--modes", modes_arg, "Comma-separated modes: default, zero, less");
    pr->add_option("--out", pr_out, "Output directory")->required();

    // report
    auto* rp = app.add_subcommand("report", "Method x strategy x scale grid over finished runs");
    add_common(rp, common);
    std::vector<std::string> report_runs;
    std::string rp_out;
    std::optional<double> mu_floor;
    rp->add_option("--run", report_runs, "Run directory (repeatable)")->required();
    rp->add_option("--out", rp_out, "Output directory (default: the first run directory)");
    rp->add_option("--mu-floor", mu_floor, "Override the MU floor used for epoch selection");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 1;
    }

    try {
        apply_log_level(common.log_level);
        auto cfg = load_config(common);
        nlohmann::json summary{{"command", app.get_subcommands().front()->get_name()}};
        std::string summary_dir;

        if (*build) {
            if (!endpoint.empty()) cfg.set_json("construction.writer", endpoint);
            if (!reasoner.empty()) cfg.set_json("construction.reasoner", reasoner);
            const auto templates = TemplateRegistry::load(templates_dir_from(cfg));
            ResponseCache cache(cfg.at("paths.cache_dir").get<std::string>());
            auto gate = std::make_shared<ConcurrencyGate>(cfg.at("concurrency").get<int>());
            auto writer_ep = make_endpoint(cfg, cfg.at("construction.writer").get<std::string>(), templates, gate);
            auto reasoner_ep = make_endpoint(cfg, cfg.at("construction.reasoner").get<std::string>(), templates, gate);
            PromptClient writer(*writer_ep, cache, templates);
            PromptClient reasoner_client(*reasoner_ep, cache, templates);
            const auto mapping = load_author_mapping(authors);
            const auto sources =
                load_source_questions(tofu, &mapping, cfg.at("construction.questions_per_author").get<int>());
            const auto chat = chat_template_from(cfg);
            BuildOptions bo{out_dir, chat.think_open, chat.think_close, cfg.at("concurrency").get<int>()};
            const auto res = build_dataset(sources, mapping, writer, reasoner_client, bo);
            summary["examples"] = res.corpus.size();
            summary["warnings"] = res.warnings;
            summary["corpus"] = out_dir + "/corpus.jsonl";
            summary["requests_sent"] = writer_ep->requests_sent() + reasoner_ep->requests_sent();
            summary_dir = out_dir;
        } else if (*ft) {
            if (ft_epochs) cfg.set_json("finetune.epochs", *ft_epochs);
            if (ft_lr) cfg.set_json("finetune.lr", *ft_lr);
            const auto corpus = load_corpus(corpus_path);
            const auto init = init_ckpt.empty() ? init_model(corpus, cfg) : load_checkpoint(init_ckpt);
            const auto s = run_finetune(init, corpus, cfg, ft_out);
            summary["result"] = s.to_json();
            summary["checkpoint"] = ft_out;
            summary_dir = ft_out;
        } else if (*ul) {
            if (!method.empty()) cfg.set_json("unlearn.method", method);
            if (!strategy.empty()) cfg.set_json("unlearn.strategy", strategy);
            if (!scale.empty()) cfg.set_json("unlearn.scale", scale);
            if (!po_variant.empty()) cfg.set_json("unlearn.po_variant", po_variant);
            if (ul_lr) cfg.set_json("unlearn.lr", *ul_lr);
            if (ul_epochs) cfg.set_json("unlearn.max_epochs", *ul_epochs);
            const auto corpus = load_corpus(ul_corpus);
            const auto target = load_checkpoint(target_ckpt);
            const auto root = runs_dir.empty() ? cfg.at("paths.runs_dir").get<std::string>() : runs_dir;
            const auto s = run_unlearn(cfg, corpus, target, root);
            // Extend the run's own summary rather than replacing it.
            const auto command = summary["command"];
            summary = nlohmann::json::parse(read_file(s.run_dir + "/summary.json"));
            summary["command"] = command;
            summary_dir = s.run_dir;
            std::cout << s.run_dir << "\n";
        } else if (*ev) {
            const auto corpus = load_corpus(ev_corpus);
            const auto lm = load_checkpoint(ev_ckpt);
            if (!snapshot.empty()) {
                const auto sets = EvalSets::from_corpus(corpus, cfg.at("metrics.eval_subset").get<size_t>());
                const std::vector<ThinkMode> modes{ThinkMode::make(
                    think_mode_from_string(cfg.at("decoding.eval_mode").get<std::string>()), lm.chat,
                    cfg.at("decoding.less_think_phrase").get<std::string>())};
                snapshot_baseline(lm, sets, modes, decode_params_from(cfg)).save(snapshot);
                summary["baseline"] = snapshot;
                summary_dir = fs::path(snapshot).parent_path().string();
            } else {
                if (baseline.empty()) throw ValidationError("evaluate needs --baseline or --snapshot-baseline");
                if (ev_out.empty()) throw ValidationError("evaluate needs --out");
                summary["result"] = run_evaluate(cfg, lm, corpus, baseline, ev_out);
                summary_dir = ev_out;
            }
        } else if (*pr) {
            std::vector<std::string> modes;
            for (const auto& m : cotforget::split(modes_arg, ',')) {
                if (!cotforget::trim(m).empty()) modes.push_back(cotforget::trim(m));
            }
            summary["result"] = run_probe(cfg, run_dir, modes, pr_out);
            summary_dir = pr_out;
        } else if (*rp) {
            const auto out = rp_out.empty() ? report_runs.front() : rp_out;
            summary["result"] = run_report(report_runs, out, mu_floor);
            std::cout << read_file(out + "/grid.txt");
            summary_dir = out;
        }

        summary["status"] = "ok";
        if (summary_dir.empty()) summary_dir = ".";
        fs::create_directories(summary_dir);
        write_summary(summary_dir, summary);
        return 0;
    } catch (const Error& e) {
        log::error(e.what());
        if (const auto* te = dynamic_cast<const TransportError*>(&e)) {
            for (const auto& a : te->attempt_log) log::error("  " + a);
        }
        return exit_code_for(e);
    } catch (const std::exception& e) {
        log::error(e.what());
        return 1;
    }
}
