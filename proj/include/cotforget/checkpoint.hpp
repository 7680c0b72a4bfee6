// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cotforget/model.hpp"
#include "cotforget/segmentation.hpp"
#include "cotforget/tokenizer.hpp"

namespace cotforget {

/// A model together with the tokenizer and chat template it was trained with.
struct LanguageModel {
    Tokenizer tokenizer;
    ChatTemplate chat;
    TinyLM net;
};

/// Writes `config.json` (model config, chat template, tokenizer) and
/// `params.bin` (raw little-endian doubles) into `dir`.
void save_checkpoint(const LanguageModel& lm, const std::string& dir);
LanguageModel load_checkpoint(const std::string& dir);
bool is_checkpoint(const std::string& dir);

}  // namespace cotforget
