// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforget/decoding.hpp"
#include "cotforget/llm.hpp"
#include "cotforget/metrics.hpp"
#include "cotforget/model.hpp"
#include "cotforget/segmentation.hpp"

namespace cotforget {

/// Nested JSON configuration: shipped defaults, then a user file, then
/// `a.b.c=value` overrides (flags win over the file).
class Config {
public:
    /// Shipped defaults merged with `user_path` when non-empty.
    static Config load(const std::string& user_path = "");
    static Config from_json(nlohmann::json j) { return Config(std::move(j)); }

    /// Recursive object merge; non-object values replace.
    void merge(const nlohmann::json& patch);
    /// Sets a dotted key. `value` is parsed as JSON when possible, else kept as a string.
    void set(std::string_view dotted_key, const std::string& value);
    void set_json(std::string_view dotted_key, nlohmann::json value);

    const nlohmann::json& json() const noexcept { return root_; }
    const nlohmann::json& at(std::string_view dotted_key) const;
    bool has(std::string_view dotted_key) const;

    std::string hash() const;

private:
    explicit Config(nlohmann::json j) : root_(std::move(j)) {}
    nlohmann::json root_;
};

std::string default_asset_dir();

ChatTemplate chat_template_from(const Config& cfg);
ModelConfig model_config_from(const Config& cfg, int vocab_size);
DecodeParams decode_params_from(const Config& cfg);
std::vector<std::string> refusal_pool_from(const Config& cfg);
std::string templates_dir_from(const Config& cfg);
EndpointConfig endpoint_config_from(const Config& cfg, const std::string& name);

/// Builds a named endpoint. Provider "local-overlap" answers judge prompts
/// offline; everything else goes over HTTP.
std::unique_ptr<LLMEndpoint> make_endpoint(const Config& cfg, const std::string& name,
                                           const TemplateRegistry& templates,
                                           std::shared_ptr<ConcurrencyGate> gate = nullptr);

std::unique_ptr<EmbeddingProvider> make_embedder(const Config& cfg);
std::unique_ptr<NliProvider> make_nli(const Config& cfg);

}  // namespace cotforget
