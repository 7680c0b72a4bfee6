// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "cotforget/config.hpp"
#include "cotforget/error.hpp"
#include "cotforget/workflows.hpp"
#include "../support.hpp"

using namespace cotforget;

TEST_CASE("defaults load and dotted overrides parse JSON values") {
    auto cfg = Config::load();
    CHECK(cfg.at("unlearn.max_epochs") == 5);
    CHECK(cfg.at("unlearn.mu_floor") == 0.6);
    cfg.set("unlearn.lr", "3e-4");
    cfg.set("unlearn.method", "gd");
    cfg.set("new.nested.key", "[1,2]");
    CHECK(cfg.at("unlearn.lr") == 3e-4);
    CHECK(cfg.at("unlearn.method") == "gd");
    CHECK(cfg.at("new.nested.key").size() == 2);
    CHECK(cfg.has("new.nested"));
    CHECK_FALSE(cfg.has("new.other"));
    try {
        cfg.at("unlearn.nope");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("unlearn.nope") != std::string::npos);
    }
}

TEST_CASE("user file merges over defaults; missing file names its path") {
    cftest::TempDir dir;
    {
        std::ofstream f(dir / "user.json");
        f << R"({"unlearn": {"method": "kl"}, "model": {"d_model": 32}})";
    }
    const auto cfg = Config::load(dir / "user.json");
    CHECK(cfg.at("unlearn.method") == "kl");
    CHECK(cfg.at("unlearn.strategy") == "cot_only");
    CHECK(cfg.at("model.d_model") == 32);
    CHECK(cfg.hash() != Config::load().hash());
    try {
        Config::load(dir / "absent.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("absent.json") != std::string::npos);
    }
}

TEST_CASE("config builds run settings and providers") {
    auto cfg = Config::load();
    cfg.set("unlearn.method", "po");
    cfg.set("unlearn.po_variant", "direct_idk");
    cfg.set("unlearn.scale", "forget05");
    const auto u = unlearn_config_from(cfg);
    CHECK(u.method == Method::po);
    CHECK(u.po_variant == IdkVariant::direct_idk);
    CHECK(u.lr == 2e-6);
    CHECK(make_embedder(cfg)->id().find("hashed-bow") != std::string::npos);
    CHECK(make_nli(cfg)->id() == "local/lexical-nli");
    CHECK(refusal_pool_from(cfg).size() >= 2);
    CHECK(chat_template_from(cfg) == ChatTemplate{});
    const auto ep = endpoint_config_from(cfg, "gpt-4o");
    CHECK(ep.credential_env == "OPENAI_API_KEY");
    CHECK(ep.to_json().dump().find("sk-") == std::string::npos);
    CHECK_THROWS_AS(endpoint_config_from(cfg, "nope"), ConfigError);
    cfg.set("unlearn.method", "xx");
    CHECK_THROWS(unlearn_config_from(cfg));
}
