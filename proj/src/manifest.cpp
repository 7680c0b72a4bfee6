// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "cotforget/log.hpp"
#include "cotforget/manifest.hpp"

namespace cotforget {

namespace log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, std::string_view msg) {
    if (lvl < g_level.load()) return;
    std::lock_guard lock(g_mutex);
    std::clog << '[' << tag << "] " << msg << '\n';
}
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level.load(); }
void debug(std::string_view m) { emit(Level::debug, "debug", m); }
void info(std::string_view m) { emit(Level::info, "info", m); }
void warn(std::string_view m) { emit(Level::warn, "warn", m); }
void error(std::string_view m) { emit(Level::error, "error", m); }

}  // namespace log

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

std::string code_version() { return COTFORGET_VERSION; }

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["corpus_hash"] = corpus_hash;
    j["code_version"] = code_version;
    j["provider_ids"] = provider_ids;
    j["created_at"] = created_at;
    j["updated_at"] = updated_at;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.config_hash = j.value("config_hash", "");
    m.corpus_hash = j.value("corpus_hash", "");
    m.code_version = j.value("code_version", "");
    if (j.contains("provider_ids")) m.provider_ids = j["provider_ids"].get<std::map<std::string, std::string>>();
    m.created_at = j.value("created_at", "");
    m.updated_at = j.value("updated_at", "");
    return m;
}

bool RunManifest::comparable_with(const RunManifest& other) const {
    return config_hash == other.config_hash && corpus_hash == other.corpus_hash &&
           code_version == other.code_version && provider_ids == other.provider_ids;
}

}  // namespace cotforget
