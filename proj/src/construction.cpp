// SPDX-License-Identifier: Apache-2.0
#include "cotforget/construction.hpp"

#include "cotforget/error.hpp"
#include "cotforget/log.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

nlohmann::ordered_json FieldProvenance::to_json() const {
    nlohmann::ordered_json j;
    j["endpoint"] = endpoint;
    j["model"] = model;
    j["template_id"] = template_id;
    j["template_version"] = template_version;
    j["cache_key"] = cache_key;
    return j;
}

CachedReply PromptClient::ask(const FilledPrompt& prompt, int attempt, FieldProvenance* provenance) {
    auto reply = call_cached(endpoint_, cache_, prompt, attempt);
    if (provenance != nullptr) {
        *provenance = {endpoint_.config().name, endpoint_.config().model, prompt.template_id, prompt.version,
                       reply.key};
    }
    return reply;
}

CachedReply PromptClient::ask(const std::string& template_id, const std::map<std::string, std::string>& fillers,
                              int attempt, FieldProvenance* provenance) {
    return ask(templates_.fill(template_id, fillers), attempt, provenance);
}

bool ConstructionRecord::valid() const {
    for (const char* field : {"rewritten_question", "real_cot", "generated_cot"}) {
        const auto it = provenance.find(field);
        if (it == provenance.end() || it->second.model.empty() || it->second.template_version.empty()) return false;
    }
    return true;
}

nlohmann::ordered_json ConstructionRecord::to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["fictitious_author"] = fictitious_author;
    j["source_question"] = source_question;
    j["source_answer"] = source_answer;
    j["real_author"] = real_author;
    j["rewritten_question"] = rewritten_question;
    j["real_cot"] = real_cot;
    j["generated_cot"] = generated_cot;
    nlohmann::ordered_json prov;
    for (const auto& [field, p] : provenance) prov[field] = p.to_json();
    j["provenance"] = prov;
    return j;
}

namespace {

std::string single_line_or_empty(const std::string& reply) {
    auto t = trim(reply);
    if (t.empty() || t.find('\n') != std::string::npos) return {};
    return t;
}

}  // namespace

std::string rewrite_question(const std::string& fictitious_question, const std::string& real_author,
                             PromptClient& client, FieldProvenance* provenance) {
    const auto prompt =
        client.templates().fill("rewrite_question", {{"fictitious_question", fictitious_question},
                                                     {"real_author", real_author}});
    auto q = single_line_or_empty(client.ask(prompt, 0, provenance).text);
    if (!q.empty()) return q;

    const auto reminder = client.templates().fill("rewrite_question_reminder", {{"prompt", prompt.text}});
    q = single_line_or_empty(client.ask(reminder, 0, provenance).text);
    if (q.empty()) {
        throw FormatError("rewrite_question: reply was empty or not a single question after reminder");
    }
    return q;
}

std::string extract_think(const std::string& reply, const std::string& open, const std::string& close) {
    const auto o = reply.find(open);
    if (o == std::string::npos) throw FormatError("reply has no '" + open + "' delimiter");
    const auto c = reply.find(close, o + open.size());
    if (c == std::string::npos) throw FormatError("reply has no '" + close + "' delimiter");
    return reply.substr(o + open.size(), c - o - open.size());
}

std::string collect_real_cot(const std::string& question, PromptClient& client, const std::string& think_open,
                             const std::string& think_close, std::vector<std::string>* warnings,
                             FieldProvenance* provenance) {
    const auto reply = client.ask("real_cot", {{"question", question}}, 0, provenance);
    auto cot = trim(extract_think(reply.text, think_open, think_close));
    if (cot.empty()) {
        const std::string msg = "collect_real_cot: empty think segment for question: " + question;
        log::warn(msg);
        if (warnings) warnings->push_back(msg);
    }
    return cot;
}

std::string generate_fictitious_cot(const std::string& question, const std::string& answer,
                                    const std::string& style_cot, PromptClient& client,
                                    const std::string& think_open, const std::string& think_close,
                                    std::vector<std::string>* warnings, FieldProvenance* provenance) {
    if (trim(style_cot).empty()) {
        const std::string msg = "generate_fictitious_cot: empty style example for question: " + question;
        log::warn(msg);
        if (warnings) warnings->push_back(msg);
    }
    const std::map<std::string, std::string> fillers{
        {"fictitious_question", question}, {"fictitious_answer", answer}, {"real_author_cot", style_cot}};
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto text = client.ask("generate_cot", fillers, attempt, provenance).text;
        // Some writers wrap the trace in think delimiters anyway.
        if (text.find(think_open) != std::string::npos && text.find(think_close) != std::string::npos) {
            text = extract_think(text, think_open, think_close);
        }
        text = trim(text);
        if (!text.empty()) return text;
    }
    throw FormatError("generate_fictitious_cot: empty reply after retry");
}

}  // namespace cotforget
