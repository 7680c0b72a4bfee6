// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "cotforget/error.hpp"
#include "cotforget/llm.hpp"
#include "cotforget/metrics.hpp"

// After the Eigen-using headers: httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen.
#include <httplib.h>

namespace cotforget {

namespace {

struct ParsedUrl {
    std::string scheme_host;
    std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl p;
    p.scheme_host = url.substr(0, path_start);
    p.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!p.path_prefix.empty() && p.path_prefix.back() == '/') p.path_prefix.pop_back();
    return p;
}

// One POST with the endpoint's timeout and credentials. Throws TransportFailure.
nlohmann::json post_json(const EndpointConfig& cfg, const std::string& route, const nlohmann::json& body) {
    if (cfg.base_url.empty()) throw TransportFailure{"endpoint '" + cfg.name + "' has no base_url", false};
    const auto url = parse_base_url(cfg.base_url);
    httplib::Client client(url.scheme_host);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!cfg.credential_env.empty()) {
        const char* key = std::getenv(cfg.credential_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw TransportFailure{"credential variable " + cfg.credential_env + " is not set", false};
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(url.path_prefix + route, headers, body.dump(), "application/json");
    if (!res) throw TransportFailure{"request failed: " + httplib::to_string(res.error()), true};
    if (res->status >= 500 || res->status == 429) {
        throw TransportFailure{"HTTP " + std::to_string(res->status), true};
    }
    if (res->status >= 400) {
        throw TransportFailure{"HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false};
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw TransportFailure{std::string("unparseable response body: ") + e.what(), false};
    }
}

// Retries retryable failures with exponential backoff; TransportError once the budget is spent.
template <class F>
auto with_retries(const EndpointConfig& cfg, F&& call) {
    std::vector<std::string> attempts;
    double backoff = cfg.backoff_s;
    const int budget = std::max(1, cfg.retry_budget);
    for (int i = 1;; ++i) {
        try {
            return call();
        } catch (const TransportFailure& f) {
            attempts.push_back("attempt " + std::to_string(i) + ": " + f.message);
            if (!f.retryable || i >= budget) {
                throw TransportError(cfg.name + ": " + f.message + " after " + std::to_string(i) + " attempt(s)",
                                     attempts);
            }
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= 2.0;
    }
}

class HttpChatTransport final : public ChatTransport {
public:
    std::string send(const EndpointConfig& cfg, const std::string& prompt) override {
        nlohmann::json body{{"model", cfg.model},
                            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        if (cfg.temperature) body["temperature"] = *cfg.temperature;
        const auto j = post_json(cfg, "/chat/completions", body);
        try {
            const auto& msg = j.at("choices").at(0).at("message");
            std::string content = msg.value("content", "");
            // Reasoning APIs may return the think segment out of band.
            if (msg.contains("reasoning_content") && msg["reasoning_content"].is_string()) {
                content = cfg.reasoning_open + msg["reasoning_content"].get<std::string>() + cfg.reasoning_close + content;
            }
            return content;
        } catch (const nlohmann::json::exception& e) {
            throw TransportFailure{std::string("unexpected completion body: ") + e.what(), false};
        }
    }
};

class HttpEmbedder final : public EmbeddingProvider {
public:
    explicit HttpEmbedder(EndpointConfig cfg) : cfg_(std::move(cfg)) {}
    std::string id() const override { return cfg_.provider + "/" + cfg_.model; }
    std::vector<double> embed(const std::string& text) override {
        return with_retries(cfg_, [&] {
            const auto j = post_json(cfg_, "/embeddings", {{"model", cfg_.model}, {"input", text}});
            try {
                return j.at("data").at(0).at("embedding").get<std::vector<double>>();
            } catch (const nlohmann::json::exception& e) {
                throw TransportFailure{std::string("unexpected embeddings body: ") + e.what(), false};
            }
        });
    }

private:
    EndpointConfig cfg_;
};

class HttpNli final : public NliProvider {
public:
    explicit HttpNli(EndpointConfig cfg) : cfg_(std::move(cfg)) {}
    std::string id() const override { return cfg_.provider + "/" + cfg_.model; }
    NliLabel classify(const std::string& premise, const std::string& hypothesis) override {
        return with_retries(cfg_, [&] {
            const auto j = post_json(cfg_, "/nli", {{"model", cfg_.model}, {"premise", premise}, {"hypothesis", hypothesis}});
            try {
                return nli_label_from_string(j.at("label").get<std::string>());
            } catch (const std::exception& e) {
                throw TransportFailure{std::string("unexpected NLI body: ") + e.what(), false};
            }
        });
    }

private:
    EndpointConfig cfg_;
};

}  // namespace

std::shared_ptr<ChatTransport> make_http_transport() { return std::make_shared<HttpChatTransport>(); }

std::unique_ptr<EmbeddingProvider> make_http_embedder(const EndpointConfig& cfg) {
    return std::make_unique<HttpEmbedder>(cfg);
}

std::unique_ptr<NliProvider> make_http_nli(const EndpointConfig& cfg) { return std::make_unique<HttpNli>(cfg); }

}  // namespace cotforget
