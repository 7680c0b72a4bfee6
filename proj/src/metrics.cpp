// SPDX-License-Identifier: Apache-2.0
#include "cotforget/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_recall(std::string_view reference, std::string_view candidate) {
    const auto ref = metric_tokens(reference);
    if (ref.empty()) return 0.0;
    const auto cand = metric_tokens(candidate);
    return static_cast<double>(lcs_length(ref, cand)) / static_cast<double>(ref.size());
}

double token_entropy(std::string_view text) {
    const auto toks = metric_tokens(text);
    if (toks.size() <= 1) return 0.0;
    std::unordered_map<std::string, size_t> counts;
    for (const auto& t : toks) ++counts[t];
    const auto n = static_cast<double>(toks.size());
    double h = 0.0;
    for (const auto& [_, c] : counts) {
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return std::clamp(h / std::log(n), 0.0, 1.0);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_similarity(const std::string& before, const std::string& after, EmbeddingProvider& embedder) {
    if (before == after) return 1.0;
    const auto a = embedder.embed(before);
    const auto b = embedder.embed(after);
    return std::clamp(cosine(a, b), 0.0, 1.0);
}

double entailment_score(std::span<const std::string> outputs, std::span<const std::string> truths,
                        NliProvider& nli) {
    if (outputs.empty()) throw ValidationError("entailment_score: empty input");
    if (outputs.size() != truths.size()) throw ValidationError("entailment_score: lists not aligned");
    size_t entailed = 0;
    for (size_t i = 0; i < outputs.size(); ++i) {
        if (nli.classify(outputs[i], truths[i]) == NliLabel::entailment) ++entailed;
    }
    return static_cast<double>(entailed) / static_cast<double>(outputs.size());
}

namespace {

// Minimum-cost assignment of rows to distinct columns (rows <= cols).
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const size_t n = cost.size();
    const size_t m = n ? cost[0].size() : 0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<size_t> p(m + 1, 0), way(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        p[0] = i;
        size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const size_t i0 = p[j0];
            double delta = inf;
            size_t j1 = 0;
            for (size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
    }
    return row_to_col;
}

}  // namespace

StepwiseResult stepwise_score(std::span<const std::string> gt_steps, std::span<const std::string> gen_steps,
                              StepMetric metric, EmbeddingProvider* embedder, bool one_to_one) {
    if (gt_steps.empty()) throw ValidationError("stepwise_score: no ground-truth steps");
    if (metric == StepMetric::cosine && embedder == nullptr) {
        throw ConfigError("stepwise_score: cosine metric needs an embedding provider");
    }
    StepwiseResult res;
    res.alignment.metric = metric;
    const size_t n = gt_steps.size();
    const size_t m = gen_steps.size();
    std::vector<std::vector<double>> score(n, std::vector<double>(m, 0.0));
    if (m > 0) {
        std::vector<std::vector<double>> gen_emb;
        if (metric == StepMetric::cosine) {
            for (const auto& g : gen_steps) gen_emb.push_back(embedder->embed(g));
        }
        for (size_t i = 0; i < n; ++i) {
            std::vector<double> gt_emb;
            if (metric == StepMetric::cosine) gt_emb = embedder->embed(gt_steps[i]);
            for (size_t j = 0; j < m; ++j) {
                score[i][j] = metric == StepMetric::rouge
                                  ? rouge_l_recall(gt_steps[i], gen_steps[j])
                                  : (gt_steps[i] == gen_steps[j] ? 1.0
                                                                 : std::clamp(cosine(gt_emb, gen_emb[j]), 0.0, 1.0));
            }
        }
    }
    std::vector<int> choice(n, -1);
    if (m > 0 && !one_to_one) {
        for (size_t i = 0; i < n; ++i) {
            choice[i] = static_cast<int>(std::max_element(score[i].begin(), score[i].end()) - score[i].begin());
        }
    } else if (m > 0) {
        // Pad with zero-score dummy columns so every gt row gets a column.
        const size_t cols = std::max(n, m);
        std::vector<std::vector<double>> cost(n, std::vector<double>(cols, 0.0));
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < m; ++j) cost[i][j] = -score[i][j];
        }
        choice = hungarian(cost);
        for (auto& c : choice) {
            if (c >= static_cast<int>(m)) c = -1;
        }
    }
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double s = choice[i] >= 0 ? score[i][static_cast<size_t>(choice[i])] : 0.0;
        res.alignment.pairs.push_back({static_cast<int>(i), choice[i], s});
        total += s;
    }
    res.score = total / static_cast<double>(n);
    return res;
}

std::optional<double> parse_judge_reply(const std::string& reply) {
    const std::string t = trim(reply);
    if (t.empty()) return std::nullopt;
    for (char c : t) {
        if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.')) return std::nullopt;
    }
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || !std::isfinite(v) || v < 0.0 || v > 1.0) return std::nullopt;
    return v;
}

double judge_score(const std::string& question, const std::string& truth_answer, const std::string& generated_cot,
                   PromptClient& judge) {
    const auto prompt = judge.templates().fill(
        "judge", {{"answer", truth_answer}, {"question", question}, {"cot_after", generated_cot}});
    const auto first = judge.ask(prompt);
    if (auto v = parse_judge_reply(first.text)) return *v;
    const auto again = judge.ask("judge_reminder", {{"prompt", prompt.text}}, 1);
    if (auto v = parse_judge_reply(again.text)) return *v;
    throw ScoringError("judge reply not a score in [0,1]: '" + trim(again.text).substr(0, 80) + "'");
}

nlohmann::json ExampleScores::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    auto put = [&](const char* k, const std::optional<double>& v) {
        if (v) j[k] = *v;
    };
    put("rouge", rouge);
    put("te", te);
    put("cs", cs);
    put("es", es);
    put("sw_rouge", sw_rouge);
    put("sw_cs", sw_cs);
    put("judge", judge);
    return j;
}

ExampleScores ExampleScores::from_json(const nlohmann::json& j) {
    ExampleScores s;
    auto get = [&](const char* k, std::optional<double>& v) {
        if (j.contains(k)) v = j.at(k).get<double>();
    };
    get("rouge", s.rouge);
    get("te", s.te);
    get("cs", s.cs);
    get("es", s.es);
    get("sw_rouge", s.sw_rouge);
    get("sw_cs", s.sw_cs);
    get("judge", s.judge);
    return s;
}

void SetReport::recompute_means() {
    per_set.clear();
    std::map<std::string, std::pair<double, long>> acc;
    for (const auto& [_, s] : per_example) {
        const auto j = s.to_json();
        for (const auto& [k, v] : j.items()) {
            acc[k].first += v.get<double>();
            acc[k].second += 1;
        }
    }
    for (const auto& [k, sum_n] : acc) per_set[k] = sum_n.first / static_cast<double>(sum_n.second);
}

const SetReport& MetricReport::set(std::string_view name) const {
    const auto it = sets.find(std::string(name));
    if (it == sets.end()) throw ValidationError("report has no set '" + std::string(name) + "'");
    return it->second;
}

double MetricReport::mean(std::string_view set_name, std::string_view metric) const {
    const auto& s = set(set_name);
    const auto it = s.per_set.find(std::string(metric));
    if (it == s.per_set.end()) {
        throw ValidationError("report is missing component " + std::string(set_name) + "." + std::string(metric));
    }
    return it->second;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["provenance"] = provenance;
    for (const auto& [name, s] : sets) {
        nlohmann::json per_example = nlohmann::json::object();
        for (const auto& [id, e] : s.per_example) per_example[id] = e.to_json();
        j["sets"][name] = {{"per_set", s.per_set}, {"per_example", per_example}, {"judge_unscored", s.judge_unscored}};
    }
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport r;
    r.mode = j.value("mode", "");
    if (j.contains("provenance")) r.provenance = j["provenance"].get<std::map<std::string, std::string>>();
    if (j.contains("sets")) {
        for (const auto& [name, s] : j["sets"].items()) {
            SetReport sr;
            for (const auto& [id, e] : s.at("per_example").items()) sr.per_example[id] = ExampleScores::from_json(e);
            sr.judge_unscored = s.value("judge_unscored", 0L);
            sr.recompute_means();
            r.sets[name] = std::move(sr);
        }
    }
    return r;
}

EvalSets EvalSets::from_corpus(const Corpus& corpus, size_t subset) {
    auto take = [&](Split s) {
        auto v = corpus.with_split(s);
        if (subset > 0 && v.size() > subset) v.resize(subset);
        return v;
    };
    return {take(Split::real_authors), take(Split::world_facts), take(Split::retain), take(Split::forget)};
}

const GenerationResult* BaselineOutputs::find(std::string_view mode, std::string_view id) const {
    const auto m = by_mode.find(std::string(mode));
    if (m == by_mode.end()) return nullptr;
    const auto it = m->second.find(std::string(id));
    return it == m->second.end() ? nullptr : &it->second;
}

void BaselineOutputs::save(const std::string& path) const {
    std::string out;
    for (const auto& [mode, by_id] : by_mode) {
        for (const auto& [id, g] : by_id) {
            nlohmann::ordered_json j;
            j["id"] = id;
            j["mode"] = mode;
            j["generation"] = g.to_json();
            out += j.dump() + "\n";
        }
    }
    write_file_atomic(path, out);
}

BaselineOutputs BaselineOutputs::load(const std::string& path) {
    BaselineOutputs b;
    const auto text = read_file(path);
    size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            b.by_mode[j.at("mode").get<std::string>()][j.at("id").get<std::string>()] =
                GenerationResult::from_json(j.at("generation"));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return b;
}

namespace {

const std::vector<ReasoningExample>* set_by_name(const EvalSets& sets, std::string_view name) {
    if (name == "real_authors") return &sets.real_authors;
    if (name == "world_facts") return &sets.world_facts;
    if (name == "retain") return &sets.retain;
    if (name == "forget") return &sets.forget;
    return nullptr;
}

constexpr std::string_view kSetNames[] = {"real_authors", "world_facts", "retain", "forget"};

}  // namespace

BaselineOutputs snapshot_baseline(const LanguageModel& target, const EvalSets& sets,
                                  std::span<const ThinkMode> modes, const DecodeParams& params) {
    BaselineOutputs b;
    for (const auto& mode : modes) {
        auto& by_id = b.by_mode[mode.name()];
        for (auto name : kSetNames) {
            for (const auto& ex : *set_by_name(sets, name)) by_id[ex.id] = generate(target, ex.question, mode, params);
        }
    }
    return b;
}

MetricReport evaluate_checkpoint(const LanguageModel& lm, const EvalSets& sets, const BaselineOutputs& baseline,
                                 const Providers& providers, const ThinkMode& mode, const EvalOptions& options,
                                 std::map<std::string, GenerationResult>* generations) {
    if (!providers.embedder || !providers.nli) throw ConfigError("evaluation needs embedding and NLI providers");
    MetricReport report;
    report.mode = mode.name();
    report.provenance["embedder"] = providers.embedder->id();
    report.provenance["nli"] = providers.nli->id();
    if (providers.judge) report.provenance["judge"] = providers.judge->endpoint().id();

    for (auto name : kSetNames) {
        const bool is_forget = name == "forget";
        if (options.forget_only && !is_forget) continue;
        SetReport sr;
        for (const auto& ex : *set_by_name(sets, name)) {
            const auto* base = baseline.find(mode.name(), ex.id);
            if (!base) {
                throw ValidationError("no pre-unlearning output for '" + ex.id + "' under " + mode.name() +
                                      "; run the baseline snapshot first");
            }
            const auto gen = generate(lm, ex.question, mode, options.decode);
            ExampleScores s;
            s.rouge = rouge_l_recall(ex.answer, gen.answer);
            s.te = token_entropy(gen.answer);
            s.cs = cosine_similarity(base->answer, gen.answer, *providers.embedder);
            s.es = providers.nli->classify(gen.answer, ex.answer) == NliLabel::entailment ? 1.0 : 0.0;
            if (is_forget && !ex.cot_steps.empty()) {
                const auto gen_steps = segment_cot(gen.cot);
                s.sw_rouge = stepwise_score(ex.cot_steps, gen_steps, StepMetric::rouge, nullptr,
                                            options.one_to_one_steps).score;
                s.sw_cs = stepwise_score(ex.cot_steps, gen_steps, StepMetric::cosine, providers.embedder,
                                         options.one_to_one_steps).score;
                if (providers.judge) {
                    try {
                        s.judge = judge_score(ex.question, ex.answer, gen.cot, *providers.judge);
                    } catch (const ScoringError& e) {
                        ++sr.judge_unscored;
                        log::warn("judge left '" + ex.id + "' unscored: " + e.what());
                    }
                }
            }
            sr.per_example[ex.id] = s;
            if (generations) (*generations)[std::string(name) + "/" + ex.id] = gen;
        }
        if (sr.judge_unscored > 0) {
            log::warn(std::to_string(sr.judge_unscored) + " forget example(s) excluded from the judge mean");
        }
        sr.recompute_means();
        report.sets[std::string(name)] = std::move(sr);
    }
    return report;
}

}  // namespace cotforget
