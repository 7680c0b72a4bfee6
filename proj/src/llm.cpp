// SPDX-License-Identifier: Apache-2.0
#include <thread>

#include "cotforget/error.hpp"
#include "cotforget/llm.hpp"

namespace cotforget {

nlohmann::json EndpointConfig::to_json() const {
    nlohmann::json j{{"provider", provider},   {"model", model},
                     {"base_url", base_url},   {"timeout_s", timeout_s},
                     {"retry_budget", retry_budget}, {"rate_limit_rps", rate_limit_rps},
                     {"backoff_s", backoff_s}, {"credential_env", credential_env}};
    if (temperature) j["temperature"] = *temperature;
    j["reasoning_open"] = reasoning_open;
    j["reasoning_close"] = reasoning_close;
    return j;
}

EndpointConfig EndpointConfig::from_json(const std::string& name, const nlohmann::json& j) {
    EndpointConfig c;
    c.name = name;
    c.provider = j.value("provider", c.provider);
    c.model = j.value("model", "");
    c.base_url = j.value("base_url", "");
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.retry_budget = j.value("retry_budget", c.retry_budget);
    c.rate_limit_rps = j.value("rate_limit_rps", c.rate_limit_rps);
    c.backoff_s = j.value("backoff_s", c.backoff_s);
    c.credential_env = j.value("credential_env", "");
    if (j.contains("temperature") && !j["temperature"].is_null()) c.temperature = j["temperature"].get<double>();
    c.reasoning_open = j.value("reasoning_open", c.reasoning_open);
    c.reasoning_close = j.value("reasoning_close", c.reasoning_close);
    if (c.model.empty()) throw ConfigError("endpoint '" + name + "' has no model");
    if (c.retry_budget < 1) throw ConfigError("endpoint '" + name + "' retry_budget must be >= 1");
    return c;
}

LLMEndpoint::LLMEndpoint(EndpointConfig cfg, std::shared_ptr<ChatTransport> transport,
                         std::shared_ptr<ConcurrencyGate> gate)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), gate_(std::move(gate)) {
    if (!transport_) throw ConfigError("endpoint '" + cfg_.name + "' has no transport");
}

void LLMEndpoint::wait_for_rate_slot() {
    if (cfg_.rate_limit_rps <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg_.rate_limit_rps));
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(rate_mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
}

std::string LLMEndpoint::complete(const std::string& prompt) {
    std::vector<std::string> log;
    double backoff = cfg_.backoff_s;
    for (int attempt = 1; attempt <= cfg_.retry_budget; ++attempt) {
        wait_for_rate_slot();
        if (gate_) gate_->acquire();
        ++requests_;
        try {
            auto reply = transport_->send(cfg_, prompt);
            if (gate_) gate_->release();
            return reply;
        } catch (const TransportFailure& f) {
            if (gate_) gate_->release();
            log.push_back("attempt " + std::to_string(attempt) + ": " + f.message);
            if (!f.retryable) break;
        }
        if (attempt < cfg_.retry_budget && backoff > 0.0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
    }
    std::string msg = "endpoint '" + cfg_.name + "' failed after " + std::to_string(log.size()) + " attempt(s)";
    if (!log.empty()) msg += "; last: " + log.back();
    throw TransportError(msg, std::move(log));
}

}  // namespace cotforget
