// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "cotforget/error.hpp"
#include "cotforget/llm.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

namespace fs = std::filesystem;

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string ResponseCache::key_for(const std::string& version, const std::string& model, const std::string& prompt,
                                   int attempt) {
    std::string material = version;
    material += '\x1f';
    material += model;
    material += '\x1f';
    material += prompt;
    if (attempt > 0) {
        material += '\x1f';
        material += std::to_string(attempt);
    }
    return sha256_hex(material);
}

std::optional<CacheEntry> ResponseCache::get(const std::string& key, const std::string& prompt) const {
    const auto path = fs::path(dir_) / (key + ".json");
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path.string()));
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;  // torn or foreign file: treat as a miss and overwrite
    }
    CacheEntry e;
    e.key = key;
    e.template_id = j.value("template_id", "");
    e.version = j.value("version", "");
    e.model = j.value("model", "");
    e.prompt = j.value("prompt", "");
    e.reply = j.value("reply", "");
    if (e.prompt != prompt) {
        throw ValidationError("cache key collision for " + key + ": stored prompt differs");
    }
    return e;
}

void ResponseCache::put(const CacheEntry& e) {
    nlohmann::ordered_json j;
    j["template_id"] = e.template_id;
    j["version"] = e.version;
    j["model"] = e.model;
    j["prompt"] = e.prompt;
    j["reply"] = e.reply;
    std::lock_guard lock(mutex_);
    write_file_atomic((fs::path(dir_) / (e.key + ".json")).string(), j.dump(2));
}

void ResponseCache::log_call(const nlohmann::json& record) {
    std::lock_guard lock(mutex_);
    std::ofstream out(fs::path(dir_) / "calls.jsonl", std::ios::app);
    out << record.dump() << '\n';
}

CachedReply call_cached(LLMEndpoint& endpoint, ResponseCache& cache, const FilledPrompt& prompt, int attempt) {
    const auto& model = endpoint.config().model;
    const auto key = ResponseCache::key_for(prompt.version, model, prompt.text, attempt);
    const auto prompt_hash = sha256_hex(prompt.text);
    if (auto hit = cache.get(key, prompt.text)) {
        cache.log_call({{"template", prompt.template_id}, {"version", prompt.version}, {"prompt_hash", prompt_hash},
                        {"endpoint", endpoint.id()}, {"cache_hit", true}});
        return {hit->reply, key, true};
    }
    auto reply = endpoint.complete(prompt.text);
    cache.put({key, prompt.template_id, prompt.version, model, prompt.text, reply});
    cache.log_call({{"template", prompt.template_id}, {"version", prompt.version}, {"prompt_hash", prompt_hash},
                    {"endpoint", endpoint.id()}, {"cache_hit", false}});
    return {std::move(reply), key, false};
}

CachedReply call_cached(LLMEndpoint& endpoint, ResponseCache& cache, const TemplateRegistry& templates,
                        const std::string& template_id, const std::map<std::string, std::string>& fillers,
                        int attempt) {
    return call_cached(endpoint, cache, templates.fill(template_id, fillers), attempt);
}

}  // namespace cotforget
