// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cotforget {

/// Connection settings for one chat-completion endpoint. Credentials are read
/// from `credential_env` at call time and never stored in this struct.
struct EndpointConfig {
    std::string name;
    std::string provider = "openai";
    std::string model;
    std::string base_url;
    double timeout_s = 60.0;
    int retry_budget = 3;           // total attempts, including the first
    double rate_limit_rps = 0.0;    // 0 = unlimited
    double backoff_s = 1.0;         // doubled after each failed attempt
    std::string credential_env;
    std::optional<double> temperature;
    // Wraps an out-of-band `reasoning_content` field when the provider returns one.
    std::string reasoning_open = "<think>";
    std::string reasoning_close = "</think>";

    nlohmann::json to_json() const;  // never includes the credential value
    static EndpointConfig from_json(const std::string& name, const nlohmann::json& j);
};

/// Raised by transports for a single failed attempt.
struct TransportFailure {
    std::string message;
    bool retryable = true;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    /// Returns the reply text or throws TransportFailure.
    virtual std::string send(const EndpointConfig& cfg, const std::string& prompt) = 0;
};

/// OpenAI-compatible `POST {base_url}/chat/completions`.
std::shared_ptr<ChatTransport> make_http_transport();

/// Process-wide cap on concurrent in-flight requests.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(std::ptrdiff_t limit) : sem_(limit) {}
    void acquire() { sem_.acquire(); }
    void release() { sem_.release(); }

private:
    std::counting_semaphore<1024> sem_;
};

/// A configured endpoint: transport plus retry, backoff, rate limit and call counting.
class LLMEndpoint {
public:
    LLMEndpoint(EndpointConfig cfg, std::shared_ptr<ChatTransport> transport,
                std::shared_ptr<ConcurrencyGate> gate = nullptr);

    const EndpointConfig& config() const noexcept { return cfg_; }
    std::string id() const { return cfg_.provider + "/" + cfg_.model; }

    /// Sends with retries; throws TransportError carrying the attempt log.
    std::string complete(const std::string& prompt);

    /// Network requests attempted so far (cache hits never reach here).
    int requests_sent() const noexcept { return requests_.load(); }

private:
    void wait_for_rate_slot();

    EndpointConfig cfg_;
    std::shared_ptr<ChatTransport> transport_;
    std::shared_ptr<ConcurrencyGate> gate_;
    std::mutex rate_mutex_;
    std::chrono::steady_clock::time_point next_slot_{};
    std::atomic<int> requests_{0};
};

/// Prompt templates shipped as versioned text assets.
struct PromptTemplate {
    std::string id;
    std::string version;
    std::string text;
};

struct FilledPrompt {
    std::string template_id;
    std::string version;
    std::string text;
};

/// Inverts a fill: recovers placeholder values from a prompt built from `t`.
/// Text after the template's last literal is ignored. nullopt when the
/// prompt does not follow the template.
std::optional<std::map<std::string, std::string>> match_template(const PromptTemplate& t, const std::string& prompt);

class TemplateRegistry {
public:
    /// Reads `<dir>/templates.json` and every file it lists.
    static TemplateRegistry load(const std::string& dir);
    void add(PromptTemplate t);

    const PromptTemplate& get(const std::string& id) const;
    bool contains(const std::string& id) const { return templates_.count(id) != 0; }

    /// Replaces `{name}` and `{{name}}` placeholders in one pass. Every
    /// placeholder must be filled and every filler must be used.
    FilledPrompt fill(const std::string& id, const std::map<std::string, std::string>& fillers) const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

struct CacheEntry {
    std::string key;
    std::string template_id;
    std::string version;
    std::string model;
    std::string prompt;
    std::string reply;
};

/// One JSON file per key; writes are atomic and serialized.
class ResponseCache {
public:
    explicit ResponseCache(std::string dir);

    std::optional<CacheEntry> get(const std::string& key, const std::string& prompt) const;
    void put(const CacheEntry& e);
    void log_call(const nlohmann::json& record);
    const std::string& dir() const noexcept { return dir_; }

    static std::string key_for(const std::string& version, const std::string& model, const std::string& prompt,
                               int attempt = 0);

private:
    std::string dir_;
    mutable std::mutex mutex_;
};

struct CachedReply {
    std::string text;
    std::string key;
    bool cache_hit = false;
};

/// Fill a template, consult the cache, call the endpoint on a miss, store the reply.
/// `attempt` salts the key so deliberate re-asks are not served from cache.
CachedReply call_cached(LLMEndpoint& endpoint, ResponseCache& cache, const TemplateRegistry& templates,
                        const std::string& template_id, const std::map<std::string, std::string>& fillers,
                        int attempt = 0);

/// Same as above for an already-filled prompt.
CachedReply call_cached(LLMEndpoint& endpoint, ResponseCache& cache, const FilledPrompt& prompt, int attempt = 0);

}  // namespace cotforget
