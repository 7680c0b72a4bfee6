// SPDX-License-Identifier: Apache-2.0
#include "cotforget/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

#include "cotforget/error.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

static_assert(std::endian::native == std::endian::little, "params.bin is written in host order");

void save_checkpoint(const LanguageModel& lm, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json cfg;
    cfg["format"] = 1;
    cfg["model"] = lm.net.config().to_json();
    cfg["chat_template"] = lm.chat.to_json();
    cfg["tokenizer"] = lm.tokenizer.to_json();
    cfg["param_hash"] = lm.net.hash();
    const auto p = lm.net.params();
    write_file_atomic(dir + "/params.bin",
                      std::string_view(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double)));
    write_file_atomic(dir + "/config.json", cfg.dump(2) + "\n");
}

LanguageModel load_checkpoint(const std::string& dir) {
    if (!is_checkpoint(dir)) throw ConfigError("not a checkpoint directory: " + dir);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(read_file(dir + "/config.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dir + "/config.json: " + e.what());
    }
    LanguageModel lm;
    lm.tokenizer = Tokenizer::from_json(cfg.at("tokenizer"));
    lm.chat = ChatTemplate::from_json(cfg.at("chat_template"));
    const auto mc = ModelConfig::from_json(cfg.at("model"));
    const std::string raw = read_file(dir + "/params.bin");
    if (raw.size() % sizeof(double) != 0) throw ParseError(dir + "/params.bin: truncated");
    std::vector<double> params(raw.size() / sizeof(double));
    std::memcpy(params.data(), raw.data(), raw.size());
    lm.net = TinyLM(mc, std::move(params));
    if (cfg.contains("param_hash") && cfg["param_hash"].get<std::string>() != lm.net.hash()) {
        throw ValidationError(dir + ": parameter hash mismatch");
    }
    if (mc.vocab_size != lm.tokenizer.vocab_size()) throw ValidationError(dir + ": tokenizer/model vocab mismatch");
    return lm;
}

bool is_checkpoint(const std::string& dir) {
    return std::filesystem::exists(dir + "/config.json") && std::filesystem::exists(dir + "/params.bin");
}

}  // namespace cotforget
