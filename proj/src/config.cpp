// SPDX-License-Identifier: Apache-2.0
#include "cotforget/config.hpp"

#include <cstdlib>
#include <filesystem>

#include "cotforget/error.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

namespace {

nlohmann::json parse_config_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

void merge_into(nlohmann::json& dst, const nlohmann::json& src) {
    if (!dst.is_object() || !src.is_object()) {
        dst = src;
        return;
    }
    for (const auto& [k, v] : src.items()) {
        if (dst.contains(k) && dst[k].is_object() && v.is_object()) {
            merge_into(dst[k], v);
        } else {
            dst[k] = v;
        }
    }
}

}  // namespace

std::string default_asset_dir() {
    if (const char* env = std::getenv("COTFORGET_ASSETS"); env && *env) return env;
    return COTFORGET_ASSET_DIR;
}

Config Config::load(const std::string& user_path) {
    Config c(parse_config_file(default_asset_dir() + "/config/default.json"));
    if (!user_path.empty()) c.merge(parse_config_file(user_path));
    return c;
}

void Config::merge(const nlohmann::json& patch) { merge_into(root_, patch); }

void Config::set_json(std::string_view dotted_key, nlohmann::json value) {
    nlohmann::json* node = &root_;
    const auto parts = split(dotted_key, '.');
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = nlohmann::json::object();
        node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = std::move(value);
}

void Config::set(std::string_view dotted_key, const std::string& value) {
    nlohmann::json v = nlohmann::json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
    set_json(dotted_key, std::move(v));
}

const nlohmann::json& Config::at(std::string_view dotted_key) const {
    const nlohmann::json* node = &root_;
    for (const auto& part : split(dotted_key, '.')) {
        if (!node->is_object() || !node->contains(part)) {
            throw ConfigError("missing config key: " + std::string(dotted_key));
        }
        node = &(*node)[part];
    }
    return *node;
}

bool Config::has(std::string_view dotted_key) const {
    const nlohmann::json* node = &root_;
    for (const auto& part : split(dotted_key, '.')) {
        if (!node->is_object() || !node->contains(part)) return false;
        node = &(*node)[part];
    }
    return true;
}

std::string Config::hash() const { return sha256_hex(root_.dump()).substr(0, 16); }

ChatTemplate chat_template_from(const Config& cfg) { return ChatTemplate::from_json(cfg.at("chat_template")); }

ModelConfig model_config_from(const Config& cfg, int vocab_size) {
    auto mc = ModelConfig::from_json(cfg.at("model"));
    mc.vocab_size = vocab_size;
    mc.validate();
    return mc;
}

DecodeParams decode_params_from(const Config& cfg) {
    const auto& d = cfg.at("decoding");
    DecodeParams p;
    p.max_new_tokens = d.value("max_new_tokens", p.max_new_tokens);
    p.temperature = d.value("temperature", p.temperature);
    p.seed = d.value("seed", p.seed);
    return p;
}

std::vector<std::string> refusal_pool_from(const Config& cfg) {
    auto pool = cfg.at("refusals").get<std::vector<std::string>>();
    if (pool.empty()) throw ConfigError("refusal pool is empty");
    return pool;
}

std::string templates_dir_from(const Config& cfg) {
    const auto dir = cfg.has("paths.templates_dir") ? cfg.at("paths.templates_dir").get<std::string>() : "";
    return dir.empty() ? default_asset_dir() + "/prompts" : dir;
}

EndpointConfig endpoint_config_from(const Config& cfg, const std::string& name) {
    if (!cfg.has("endpoints") || !cfg.at("endpoints").contains(name)) {
        throw ConfigError("no endpoint named '" + name + "' in config");
    }
    return EndpointConfig::from_json(name, cfg.at("endpoints").at(name));
}

std::unique_ptr<LLMEndpoint> make_endpoint(const Config& cfg, const std::string& name,
                                           const TemplateRegistry& templates, std::shared_ptr<ConcurrencyGate> gate) {
    auto ec = endpoint_config_from(cfg, name);
    std::shared_ptr<ChatTransport> transport;
    if (ec.provider == "local-overlap") {
        transport = make_overlap_judge_transport(templates.get("judge"));
    } else {
        transport = make_http_transport();
    }
    return std::make_unique<LLMEndpoint>(std::move(ec), std::move(transport), std::move(gate));
}

std::unique_ptr<EmbeddingProvider> make_embedder(const Config& cfg) {
    const auto& e = cfg.at("metrics.embedder");
    const auto provider = e.value("provider", std::string("hashed-bow"));
    if (provider == "hashed-bow") return std::make_unique<HashedBowEmbedder>(e.value("dim", size_t{1024}));
    if (provider == "http") return make_http_embedder(endpoint_config_from(cfg, e.at("endpoint").get<std::string>()));
    throw ConfigError("unknown embedding provider: " + provider);
}

std::unique_ptr<NliProvider> make_nli(const Config& cfg) {
    const auto& n = cfg.at("metrics.nli");
    const auto provider = n.value("provider", std::string("lexical"));
    if (provider == "lexical") return std::make_unique<LexicalNli>(n.value("threshold", 0.6));
    if (provider == "http") return make_http_nli(endpoint_config_from(cfg, n.at("endpoint").get<std::string>()));
    throw ConfigError("unknown NLI provider: " + provider);
}

}  // namespace cotforget
