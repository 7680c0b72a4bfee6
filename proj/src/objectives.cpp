// SPDX-License-Identifier: Apache-2.0
#include "cotforget/objectives.hpp"

#include <cmath>

#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

namespace {

Eigen::RowVectorXd log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    return z.array() - lse;
}

struct TermResult {
    double mean = 0.0;  // mean over sequences of per-sequence masked NLL
    long tokens = 0;
    std::vector<double> per_sequence;
    std::vector<long> tokens_per_sequence;
};

// Per-sequence masked NLL, averaged over the batch. `sign` multiplies the
// gradient contribution (ascent on the forget set uses -1).
TermResult nll_term(std::span<const TrainSequence> batch, const TinyLM& model, double sign, LossRole role,
                    GradientSink* sink) {
    if (batch.empty()) throw ValidationError("empty batch");
    TermResult r;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& seq = batch[i];
        const auto& toks = seq.rendered.tokens;
        ForwardTrace trace;
        const Mat logits = model.forward(toks, sink ? &trace : nullptr);
        Mat dlogits;
        if (sink) dlogits = Mat::Zero(logits.rows(), logits.cols());
        const double nll = masked_nll(logits, toks, seq.mask.mask, sink ? &dlogits : nullptr, sign * inv_n);
        r.per_sequence.push_back(nll);
        r.tokens_per_sequence.push_back(seq.mask.popcount());
        r.tokens += seq.mask.popcount();
        r.mean += nll * inv_n;
        if (sink) {
            if (sink->observer) sink->observer(role, i, dlogits);
            model.backward(trace, dlogits * sink->scale, sink->grad);
        }
    }
    return r;
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::ga: return "ga";
        case Method::gd: return "gd";
        case Method::kl: return "kl";
        case Method::po: return "po";
    }
    return "?";
}

Method method_from_string(std::string_view s) {
    if (s == "ga") return Method::ga;
    if (s == "gd") return Method::gd;
    if (s == "kl") return Method::kl;
    if (s == "po") return Method::po;
    throw ValidationError("unknown method: " + std::string(s));
}

TrainSequence make_sequence(const ReasoningExample& ex, Strategy strategy, const ChatTemplate& tmpl,
                            const Tokenizer& tok, int max_len) {
    TrainSequence s;
    s.rendered = render_example(ex, tmpl, tok, max_len);
    s.mask = build_mask(s.rendered, strategy);
    return s;
}

double masked_nll(const Mat& logits, std::span<const int> targets, const std::vector<bool>& mask, Mat* dlogits,
                  double scale) {
    const auto T = static_cast<Eigen::Index>(targets.size());
    if (logits.rows() != T || mask.size() != targets.size()) throw ValidationError("masked_nll: shape mismatch");
    if (!mask.empty() && mask[0]) throw ValidationError("masked_nll: position 0 has no predicting context");
    long count = 0;
    for (bool b : mask) count += b ? 1 : 0;
    if (count == 0) throw EmptyMaskError("masked_nll: mask selects no target positions");
    const double inv = 1.0 / static_cast<double>(count);
    double total = 0.0;
    for (Eigen::Index t = 1; t < T; ++t) {
        if (!mask[static_cast<size_t>(t)]) continue;
        const Eigen::RowVectorXd lp = log_softmax(logits.row(t - 1));
        const int y = targets[static_cast<size_t>(t)];
        total -= lp(y);
        if (dlogits) {
            Eigen::RowVectorXd g = lp.array().exp();
            g(y) -= 1.0;
            dlogits->row(t - 1) += g * (scale * inv);
        }
    }
    return total * inv;
}

double kl_divergence(const Eigen::Ref<const Eigen::RowVectorXd>& p_logits,
                     const Eigen::Ref<const Eigen::RowVectorXd>& q_logits) {
    if (p_logits.size() != q_logits.size()) throw ValidationError("kl_divergence: vocabulary mismatch");
    const Eigen::RowVectorXd lp = log_softmax(p_logits);
    const Eigen::RowVectorXd lq = log_softmax(q_logits);
    return (lp.array().exp() * (lp - lq).array()).sum();
}

double LossBreakdown::recompose() const {
    switch (method) {
        case Method::ga: return -forget_term;
        case Method::gd: return -forget_term + retain_term;
        case Method::kl: return -forget_term + kl_term;
        case Method::po: return retain_term + forget_term;
    }
    return 0.0;
}

nlohmann::json LossBreakdown::to_json() const {
    return {{"method", to_string(method)},     {"forget_term", forget_term},     {"retain_term", retain_term},
            {"kl_term", kl_term},              {"total", total},                 {"forget_tokens", forget_tokens},
            {"retain_tokens", retain_tokens}, {"kl_tokens", kl_tokens}};
}

double batch_nll(std::span<const TrainSequence> batch, const TinyLM& model, GradientSink* sink, long* tokens) {
    const auto r = nll_term(batch, model, 1.0, LossRole::retain, sink);
    if (tokens) *tokens = r.tokens;
    return r.mean;
}

LossBreakdown ga_loss(std::span<const TrainSequence> forget, const TinyLM& model, GradientSink* sink) {
    LossBreakdown b;
    b.method = Method::ga;
    auto f = nll_term(forget, model, -1.0, LossRole::forget, sink);
    b.forget_term = f.mean;
    b.forget_tokens = f.tokens;
    b.forget_per_sequence = std::move(f.per_sequence);
    b.forget_tokens_per_sequence = std::move(f.tokens_per_sequence);
    b.total = b.recompose();
    return b;
}

LossBreakdown gd_loss(std::span<const TrainSequence> forget, std::span<const TrainSequence> retain,
                      const TinyLM& model, GradientSink* sink) {
    if (retain.empty()) throw ValidationError("gd_loss: empty retain batch");
    LossBreakdown b = ga_loss(forget, model, sink);
    b.method = Method::gd;
    const auto r = nll_term(retain, model, 1.0, LossRole::retain, sink);
    b.retain_term = r.mean;
    b.retain_tokens = r.tokens;
    b.total = b.recompose();
    return b;
}

LossBreakdown kl_loss(std::span<const TrainSequence> forget, std::span<const TrainSequence> retain,
                      const TinyLM& model, const TinyLM* frozen, GradientSink* sink, const KlOptions& options) {
    if (!frozen) throw ConfigError("kl_loss: frozen target model missing");
    if (frozen->config().vocab_size != model.config().vocab_size) {
        throw ValidationError("kl_loss: vocabulary mismatch between unlearned and frozen model");
    }
    if (retain.empty()) throw ValidationError("kl_loss: empty retain batch");
    LossBreakdown b = ga_loss(forget, model, sink);
    b.method = Method::kl;
    const double inv_n = 1.0 / static_cast<double>(retain.size());
    for (size_t i = 0; i < retain.size(); ++i) {
        const auto& r = retain[i].rendered;
        std::vector<int> positions;  // target positions scored
        for (int t = 1; t < r.length(); ++t) {
            if (!options.response_only || r.think.contains(t) || r.answer.contains(t)) positions.push_back(t);
        }
        if (positions.empty()) throw EmptyMaskError("kl_loss: retain sequence " + r.id + " has no response tokens");
        ForwardTrace trace;
        const Mat lu = model.forward(r.tokens, sink ? &trace : nullptr);
        const Mat lt = frozen->forward(r.tokens);
        const double inv_k = 1.0 / static_cast<double>(positions.size());
        Mat dlogits;
        if (sink) dlogits = Mat::Zero(lu.rows(), lu.cols());
        double seq_kl = 0.0;
        for (int t : positions) {
            const Eigen::RowVectorXd lpt = log_softmax(lt.row(t - 1));
            const Eigen::RowVectorXd lpu = log_softmax(lu.row(t - 1));
            const Eigen::RowVectorXd pt = lpt.array().exp();
            seq_kl += (pt.array() * (lpt - lpu).array()).sum();
            // d KL(p_t || softmax(z)) / dz = softmax(z) - p_t
            if (sink) dlogits.row(t - 1) += (lpu.array().exp().matrix() - pt) * (inv_k * inv_n);
        }
        b.kl_term += seq_kl * inv_k * inv_n;
        b.kl_tokens += static_cast<long>(positions.size());
        if (sink) {
            if (sink->observer) sink->observer(LossRole::kl, i, dlogits);
            model.backward(trace, dlogits * sink->scale, sink->grad);
        }
    }
    b.total = b.recompose();
    return b;
}

LossBreakdown po_loss(std::span<const TrainSequence> retain, std::span<const TrainSequence> forget_idk,
                      const TinyLM& model, GradientSink* sink) {
    LossBreakdown b;
    b.method = Method::po;
    auto f = nll_term(forget_idk, model, 1.0, LossRole::forget, sink);
    b.forget_term = f.mean;
    b.forget_tokens = f.tokens;
    b.forget_per_sequence = std::move(f.per_sequence);
    b.forget_tokens_per_sequence = std::move(f.tokens_per_sequence);
    const auto r = nll_term(retain, model, 1.0, LossRole::retain, sink);
    b.retain_term = r.mean;
    b.retain_tokens = r.tokens;
    b.total = b.recompose();
    return b;
}

std::string_view to_string(IdkVariant v) {
    switch (v) {
        case IdkVariant::answer_idk: return "answer_idk";
        case IdkVariant::direct_idk: return "direct_idk";
        case IdkVariant::reasoned_idk: return "reasoned_idk";
    }
    return "?";
}

IdkVariant idk_variant_from_string(std::string_view s) {
    if (s == "answer_idk") return IdkVariant::answer_idk;
    if (s == "direct_idk") return IdkVariant::direct_idk;
    if (s == "reasoned_idk") return IdkVariant::reasoned_idk;
    throw ValidationError("unknown IDK variant: " + std::string(s));
}

void IdkVariantSpec::validate(std::span<const ReasoningExample> forget) const {
    if (idk_pool.empty()) throw ValidationError("IDK refusal pool is empty");
    if (variant != IdkVariant::reasoned_idk) return;
    for (const auto& ex : forget) {
        if (!reasoned_traces.count(ex.id)) throw ValidationError("missing reasoned IDK trace for forget id " + ex.id);
    }
}

std::vector<IdkExample> build_idk_dataset(std::span<const ReasoningExample> forget, const IdkVariantSpec& spec,
                                          std::uint64_t seed) {
    spec.validate(forget);
    std::uint64_t state = seed;
    auto refusal = [&] { return spec.idk_pool[portable_below(state, spec.idk_pool.size())]; };
    std::vector<IdkExample> out;
    out.reserve(forget.size());
    for (const auto& ex : forget) {
        IdkExample ie{ex, Strategy::cot_and_answer};
        switch (spec.variant) {
            case IdkVariant::answer_idk:
                ie.example.answer = refusal();
                ie.mask_rule = Strategy::answer_only;
                break;
            case IdkVariant::direct_idk:
                ie.example.cot = refusal();
                ie.example.answer = refusal();
                break;
            case IdkVariant::reasoned_idk:
                ie.example.cot = spec.reasoned_traces.at(ex.id);
                ie.example.answer = refusal();
                break;
        }
        ie.example.cot_steps = segment_cot(ie.example.cot);
        out.push_back(std::move(ie));
    }
    return out;
}

std::string generate_reasoned_idk(const std::string& question, const std::string& forbidden_answer,
                                  PromptClient& client, const std::string& think_open,
                                  const std::string& think_close, FieldProvenance* provenance) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = client.ask("reasoned_idk", {{"question", question}}, attempt, provenance);
        std::string text = reply.text;
        if (text.find(think_open) != std::string::npos && text.find(think_close) != std::string::npos) {
            text = extract_think(text, think_open, think_close);
        }
        text = trim(text);
        if (text.empty()) throw FormatError("reasoned IDK: empty reply for question: " + question);
        if (!forbidden_answer.empty() && contains_normalized(text, forbidden_answer)) {
            log::warn("reasoned IDK trace states the forget answer; " +
                      std::string(attempt == 0 ? "regenerating" : "giving up"));
            continue;
        }
        return text;
    }
    throw FormatError("reasoned IDK: trace kept stating the forget answer for question: " + question);
}

}  // namespace cotforget
