// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace cotforget {

/// Identifies what produced a report. Reports with equal manifests are comparable.
struct RunManifest {
    std::string config_hash;
    std::string corpus_hash;
    std::string code_version;
    std::map<std::string, std::string> provider_ids;  // role -> provider/model id
    std::string created_at;
    std::string updated_at;

    nlohmann::ordered_json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    bool comparable_with(const RunManifest& other) const;
};

std::string utc_timestamp();
std::string code_version();

}  // namespace cotforget
