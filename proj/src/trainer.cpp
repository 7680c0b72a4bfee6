// SPDX-License-Identifier: Apache-2.0
#include "cotforget/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/manifest.hpp"
#include "cotforget/optim.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

double UnlearnRunConfig::default_lr(const std::string& scale) {
    if (scale == "forget01") return 1e-5;
    if (scale == "forget05" || scale == "forget10") return 2e-6;
    throw ConfigError("unknown forget scale: " + scale);
}

double UnlearnRunConfig::fraction_of(const std::string& scale) {
    if (scale == "forget01") return 0.01;
    if (scale == "forget05") return 0.05;
    if (scale == "forget10") return 0.10;
    throw ConfigError("unknown forget scale: " + scale);
}

void UnlearnRunConfig::validate() const {
    fraction_of(forget_scale);
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (effective_batch < 1 || micro_batch < 1) throw ConfigError("batch sizes must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (!(mu_floor > 0.0 && mu_floor < 1.0)) throw ConfigError("mu_floor must lie in (0,1)");
    if (method == Method::po && !po_variant) throw ConfigError("po needs an IDK variant");
}

nlohmann::ordered_json UnlearnRunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["method"] = to_string(method);
    j["strategy"] = to_string(strategy);
    j["po_variant"] = po_variant ? nlohmann::ordered_json(to_string(*po_variant)) : nlohmann::ordered_json();
    j["forget_scale"] = forget_scale;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["effective_batch"] = effective_batch;
    j["micro_batch"] = micro_batch;
    j["max_epochs"] = max_epochs;
    j["mu_floor"] = mu_floor;
    j["seed"] = seed;
    j["model_id"] = model_id;
    j["kl_response_only"] = kl_response_only;
    j["po_retain_strategy"] = to_string(po_retain_strategy);
    j["max_len"] = max_len;
    return j;
}

UnlearnRunConfig UnlearnRunConfig::from_json(const nlohmann::json& j) {
    UnlearnRunConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    c.strategy = strategy_from_string(j.value("strategy", std::string(to_string(c.strategy))));
    if (j.contains("po_variant") && !j["po_variant"].is_null()) {
        c.po_variant = idk_variant_from_string(j["po_variant"].get<std::string>());
    }
    c.forget_scale = j.value("forget_scale", c.forget_scale);
    c.lr = j.contains("lr") && !j["lr"].is_null() ? j["lr"].get<double>() : default_lr(c.forget_scale);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.effective_batch = j.value("effective_batch", c.effective_batch);
    c.micro_batch = j.value("micro_batch", c.micro_batch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.mu_floor = j.value("mu_floor", c.mu_floor);
    c.seed = j.value("seed", c.seed);
    c.model_id = j.value("model_id", c.model_id);
    c.kl_response_only = j.value("kl_response_only", c.kl_response_only);
    c.po_retain_strategy = strategy_from_string(j.value("po_retain_strategy", std::string("cot_and_answer")));
    c.max_len = j.value("max_len", c.max_len);
    return c;
}

std::string UnlearnRunConfig::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

std::string UnlearnRunConfig::label() const {
    const std::string variant = method == Method::po && po_variant ? std::string(to_string(*po_variant))
                                                                   : std::string(to_string(strategy));
    return std::string(to_string(method)) + "/" + variant + "/" + forget_scale;
}

nlohmann::json EpochRecord::to_json() const {
    return {{"epoch", epoch}, {"losses", losses.to_json()}, {"mu", mu},
            {"afe", afe},     {"cfe", cfe},                 {"lr_at_end", lr_at_end},
            {"checkpoint_ref", checkpoint_ref},             {"extra", extra}};
}

EpochRecord EpochRecord::from_json(const nlohmann::json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    const auto& l = j.at("losses");
    r.losses.method = method_from_string(l.at("method").get<std::string>());
    r.losses.forget_term = l.value("forget_term", 0.0);
    r.losses.retain_term = l.value("retain_term", 0.0);
    r.losses.kl_term = l.value("kl_term", 0.0);
    r.losses.total = l.value("total", 0.0);
    r.losses.forget_tokens = l.value("forget_tokens", 0L);
    r.losses.retain_tokens = l.value("retain_tokens", 0L);
    r.losses.kl_tokens = l.value("kl_tokens", 0L);
    r.mu = j.at("mu").get<double>();
    r.afe = j.at("afe").get<double>();
    r.cfe = j.at("cfe").get<double>();
    r.lr_at_end = j.value("lr_at_end", 0.0);
    r.checkpoint_ref = j.at("checkpoint_ref").get<std::string>();
    r.extra = j.value("extra", nlohmann::json::object());
    return r;
}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<TrainSequence> sequences_for(std::span<const ReasoningExample> examples, Strategy strategy,
                                         const LanguageModel& lm, int max_len) {
    std::vector<TrainSequence> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(make_sequence(ex, strategy, lm.chat, lm.tokenizer, max_len));
    return out;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double w) {
    acc.forget_term += w * b.forget_term;
    acc.retain_term += w * b.retain_term;
    acc.kl_term += w * b.kl_term;
    acc.forget_tokens += b.forget_tokens;
    acc.retain_tokens += b.retain_tokens;
    acc.kl_tokens += b.kl_tokens;
}

}  // namespace

FinetuneResult finetune_target(const LanguageModel& init, std::span<const ReasoningExample> data,
                               const FinetuneOptions& options) {
    FinetuneResult res{init, {}};
    if (options.epochs <= 0) return res;
    if (data.empty()) throw ValidationError("finetune: empty training set");
    if (options.batch_size < 1 || options.micro_batch < 1) throw ConfigError("finetune: batch sizes must be positive");
    auto& net = res.model.net;
    auto seqs = sequences_for(data, Strategy::cot_and_answer, res.model, options.max_len);
    // Supervise the whole assistant turn. With an empty cot the think span is
    // empty, but the model still has to learn to emit the bare delimiters.
    for (auto& s : seqs) {
        for (int t = s.rendered.prompt.end; t < s.rendered.length(); ++t) s.mask.mask[t] = true;
    }
    AdamW opt(net.num_params(), net.decay_mask(), {0.9, 0.999, 1e-8, options.weight_decay});
    std::vector<double> grad(net.num_params());
    std::vector<size_t> order(seqs.size());
    const auto batch = static_cast<size_t>(options.batch_size);
    const auto micro = static_cast<size_t>(options.micro_batch);

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        const std::vector<double> last_good(net.params().begin(), net.params().end());
        std::iota(order.begin(), order.end(), size_t{0});
        portable_shuffle(order, options.seed + static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += batch) {
            const size_t b1 = std::min(order.size(), b0 + batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0.0;
            for (size_t m0 = b0; m0 < b1; m0 += micro) {
                const size_t m1 = std::min(b1, m0 + micro);
                std::vector<TrainSequence> part;
                for (size_t k = m0; k < m1; ++k) part.push_back(seqs[order[k]]);
                const double w = static_cast<double>(m1 - m0) / static_cast<double>(b1 - b0);
                GradientSink sink{grad, w, {}};
                loss += w * batch_nll(part, net, &sink);
            }
            if (!std::isfinite(loss) || !all_finite(grad)) {
                std::copy(last_good.begin(), last_good.end(), net.params().begin());
                if (!options.last_good_dir.empty()) save_checkpoint(res.model, options.last_good_dir);
                throw DivergenceError("finetune diverged in epoch " + std::to_string(epoch),
                                      options.last_good_dir);
            }
            opt.step(net.params(), grad, options.lr);
            epoch_loss += loss;
            ++batches;
        }
        res.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
        log::debug("finetune epoch " + std::to_string(epoch) + " loss " + std::to_string(res.epoch_losses.back()));
    }
    return res;
}

namespace {

// One optimizer step's worth of sequences, split into aligned micro-batches.
struct StepBatch {
    std::vector<TrainSequence> forget;
    std::vector<TrainSequence> retain;
};

LossBreakdown objective(const UnlearnRunConfig& cfg, std::span<const TrainSequence> forget,
                        std::span<const TrainSequence> retain, const TinyLM& model, const TinyLM* frozen,
                        GradientSink* sink) {
    switch (cfg.method) {
        case Method::ga: return ga_loss(forget, model, sink);
        case Method::gd: return gd_loss(forget, retain, model, sink);
        case Method::kl: return kl_loss(forget, retain, model, frozen, sink, {cfg.kl_response_only});
        case Method::po: return po_loss(retain, forget, model, sink);
    }
    throw ConfigError("unknown method");
}

void save_records(const std::string& run_dir, const std::vector<EpochRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) arr.push_back(r.to_json());
    write_file_atomic(run_dir + "/records.json", arr.dump(2) + "\n");
}

}  // namespace

std::vector<EpochRecord> run_unlearning(const UnlearnRunConfig& cfg, const LanguageModel& target,
                                        const UnlearnInputs& inputs, const std::string& run_dir,
                                        const EpochEvaluator& evaluate, UnlearnTrace* trace) {
    cfg.validate();
    if (cfg.method == Method::kl && inputs.frozen == nullptr) {
        throw ConfigError("kl unlearning needs a frozen copy of the target model");
    }
    if (cfg.method == Method::po && inputs.idk == nullptr) throw ConfigError("po unlearning needs an IDK variant spec");
    if (inputs.forget.empty()) throw ValidationError("unlearning: empty forget set");
    const bool needs_retain = cfg.method != Method::ga;
    if (needs_retain && inputs.retain.empty()) throw ValidationError("unlearning: empty retain set");

    // Forget-side sequences and their masks.
    std::vector<TrainSequence> forget;
    if (cfg.method == Method::po) {
        const auto idk = build_idk_dataset(inputs.forget, *inputs.idk, cfg.seed);
        for (const auto& ie : idk) {
            forget.push_back(make_sequence(ie.example, ie.mask_rule, target.chat, target.tokenizer, cfg.max_len));
        }
    } else {
        forget = sequences_for(inputs.forget, cfg.strategy, target, cfg.max_len);
    }
    std::vector<TrainSequence> retain;
    if (needs_retain) {
        const Strategy rs = cfg.method == Method::po   ? cfg.po_retain_strategy
                            : cfg.method == Method::kl ? Strategy::cot_and_answer
                                                       : cfg.strategy;
        retain = sequences_for(inputs.retain, rs, target, cfg.max_len);
    }

    std::filesystem::create_directories(run_dir);
    nlohmann::ordered_json run;
    run["config"] = cfg.to_json();
    run["config_hash"] = cfg.hash();
    run["target_hash"] = target.net.hash();
    run["created_at"] = utc_timestamp();
    write_file_atomic(run_dir + "/run.json", run.dump(2) + "\n");
    save_checkpoint(target, run_dir + "/epoch0");

    const std::string frozen_before = inputs.frozen ? inputs.frozen->net.hash() : std::string();
    LanguageModel model = target;
    auto& net = model.net;
    AdamW opt(net.num_params(), net.decay_mask(), {0.9, 0.999, 1e-8, cfg.weight_decay});
    const auto eff = static_cast<size_t>(cfg.effective_batch);
    const long steps_per_epoch = static_cast<long>((forget.size() + eff - 1) / eff);
    const WarmupLinearSchedule schedule(cfg.lr, steps_per_epoch, steps_per_epoch * cfg.max_epochs);
    if (trace) trace->steps_per_epoch = steps_per_epoch;

    std::vector<double> grad(net.num_params());
    std::vector<size_t> forget_order(forget.size()), retain_order(retain.size());
    std::iota(forget_order.begin(), forget_order.end(), size_t{0});
    std::iota(retain_order.begin(), retain_order.end(), size_t{0});
    std::vector<EpochRecord> records;
    std::string last_good_ref = run_dir + "/epoch0";
    long step = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::vector<double> epoch_start(net.params().begin(), net.params().end());
        portable_shuffle(forget_order, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
        portable_shuffle(retain_order, cfg.seed * 1000033ULL + static_cast<std::uint64_t>(epoch));
        size_t retain_cursor = 0;
        int reshuffles = 0;
        LossBreakdown epoch_loss;
        epoch_loss.method = cfg.method;

        for (long s = 0; s < steps_per_epoch; ++s, ++step) {
            const size_t b0 = static_cast<size_t>(s) * eff;
            const size_t b1 = std::min(forget.size(), b0 + eff);
            StepBatch sb;
            for (size_t k = b0; k < b1; ++k) sb.forget.push_back(forget[forget_order[k]]);
            if (needs_retain) {
                // One retain example per forget example, without replacement inside the epoch.
                for (size_t k = b0; k < b1; ++k) {
                    if (retain_cursor == retain_order.size()) {
                        portable_shuffle(retain_order, cfg.seed + static_cast<std::uint64_t>(step) + 7919ULL);
                        retain_cursor = 0;
                        ++reshuffles;
                    }
                    sb.retain.push_back(retain[retain_order[retain_cursor++]]);
                }
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            LossBreakdown step_loss;
            step_loss.method = cfg.method;
            const size_t n = sb.forget.size();
            const auto micro = static_cast<size_t>(cfg.micro_batch);
            for (size_t m0 = 0; m0 < n; m0 += micro) {
                const size_t m1 = std::min(n, m0 + micro);
                const double w = static_cast<double>(m1 - m0) / static_cast<double>(n);
                const std::span<const TrainSequence> f(sb.forget.data() + m0, m1 - m0);
                const std::span<const TrainSequence> r =
                    needs_retain ? std::span<const TrainSequence>(sb.retain.data() + m0, m1 - m0)
                                 : std::span<const TrainSequence>();
                GradientSink sink{grad, w, {}};
                const auto lb = objective(cfg, f, r, net, inputs.frozen ? &inputs.frozen->net : nullptr, &sink);
                accumulate(step_loss, lb, w);
            }
            step_loss.total = step_loss.recompose();
            if (!std::isfinite(step_loss.total) || !all_finite(grad)) {
                std::copy(epoch_start.begin(), epoch_start.end(), net.params().begin());
                save_records(run_dir, records);
                throw DivergenceError("unlearning diverged at step " + std::to_string(step), last_good_ref);
            }
            const double lr = schedule.at(step);
            opt.step(net.params(), grad, lr);
            if (trace) {
                trace->lr_per_step.push_back(lr);
                trace->step_losses.push_back(step_loss);
            }
            accumulate(epoch_loss, step_loss, 1.0 / static_cast<double>(steps_per_epoch));
        }
        if (reshuffles > 0) log::debug("retain pool reshuffled " + std::to_string(reshuffles) + " time(s)");
        epoch_loss.total = epoch_loss.recompose();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.losses = epoch_loss;
        rec.lr_at_end = schedule.at(step);
        rec.checkpoint_ref = run_dir + "/epoch" + std::to_string(epoch);
        save_checkpoint(model, rec.checkpoint_ref);
        last_good_ref = rec.checkpoint_ref;
        if (evaluate) {
            const auto sc = evaluate(epoch, model, rec.checkpoint_ref);
            rec.mu = sc.mu;
            rec.afe = sc.afe;
            rec.cfe = sc.cfe;
            rec.extra = sc.extra;
        }
        records.push_back(rec);
        save_records(run_dir, records);
        log::info(cfg.label() + " epoch " + std::to_string(epoch) + ": loss " + std::to_string(epoch_loss.total) +
                  " MU " + std::to_string(rec.mu) + " AFE " + std::to_string(rec.afe) + " CFE " +
                  std::to_string(rec.cfe));
    }

    if (inputs.frozen) {
        const auto after = inputs.frozen->net.hash();
        if (trace) {
            trace->frozen_hash_before = frozen_before;
            trace->frozen_hash_after = after;
        }
        if (after != frozen_before) throw ValidationError("frozen target model changed during unlearning");
    }
    return records;
}

std::vector<EpochRecord> load_records(const std::string& run_dir) {
    const auto path = run_dir + "/records.json";
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    std::vector<EpochRecord> out;
    for (const auto& j : arr) out.push_back(EpochRecord::from_json(j));
    return out;
}

int select_report_epoch(std::span<const double> mu, double mu_floor, bool* warning) {
    if (mu.empty()) throw ValidationError("select_report_epoch: no records");
    if (warning) *warning = false;
    if (mu[0] < mu_floor) {
        if (warning) *warning = true;
        log::warn("MU is below the floor from the first epoch; reporting epoch 1");
        return 1;
    }
    int e = 1;
    while (static_cast<size_t>(e) < mu.size() && mu[static_cast<size_t>(e)] >= mu_floor) ++e;
    return e;
}

int select_report_epoch(std::span<const EpochRecord> records, double mu_floor, bool* warning) {
    std::vector<double> mu;
    for (size_t i = 0; i < records.size(); ++i) {
        if (i > 0 && records[i].epoch <= records[i - 1].epoch) {
            throw ValidationError("epoch records are not strictly increasing");
        }
        mu.push_back(records[i].mu);
    }
    const int k = select_report_epoch(std::span<const double>(mu), mu_floor, warning);
    return records[static_cast<size_t>(k - 1)].epoch;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (size_t i = 0; i < idx.size();) {
        size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two aligned series of length >= 2");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace cotforget
