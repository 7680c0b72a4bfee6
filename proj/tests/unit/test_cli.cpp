// SPDX-License-Identifier: Apache-2.0
// Drives the command-line tool as a subprocess.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <sys/wait.h>

#include "cotforget/corpus.hpp"
#include "cotforget/text.hpp"
#include "../support.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const std::string& log_path) {
    const std::string cmd = std::string(COTFORGET_CLI_PATH) + " " + args + " > " + log_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small enough that the whole pipeline runs in seconds.
void write_tiny_config(const cftest::TempDir& dir) {
    nlohmann::json j{
        {"paths", {{"cache_dir", dir / "cache"}, {"runs_dir", dir / "runs"}}},
        {"model", {{"d_model", 16}, {"n_layers", 1}, {"n_heads", 2}, {"d_ff", 32}, {"max_len", 160}, {"init_std", 0.1}}},
        {"finetune", {{"epochs", 2}, {"lr", 3e-3}, {"batch_size", 4}, {"micro_batch", 4}}},
        {"unlearn",
         {{"scale", "forget10"}, {"lr", 1e-3}, {"effective_batch", 2}, {"micro_batch", 2}, {"max_epochs", 2}}},
        {"metrics", {{"eval_subset", 2}}},
        {"decoding", {{"max_new_tokens", 12}, {"probe_modes", {"default", "zero"}}}},
    };
    std::ofstream(dir / "tiny.json") << j.dump(2);
    cotforget::save_corpus(cftest::mini_corpus(), dir / "corpus.jsonl");
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    cftest::TempDir dir;
    CHECK(run_cli("", dir / "log") == 1);
    CHECK(run_cli("frobnicate", dir / "log") == 1);
    CHECK(cotforget::read_file(dir / "log").find("finetune") != std::string::npos);
    CHECK(run_cli("report --run x --config " + (dir / "missing.json"), dir / "log") == 1);
    CHECK(cotforget::read_file(dir / "log").find("missing.json") != std::string::npos);
    CHECK(run_cli("finetune --corpus x", dir / "log") == 1);
}

TEST_CASE("transport failures exit 2") {
    cftest::TempDir dir;
    std::ofstream(dir / "authors.jsonl") << R"({"author":"A","real_author":"R"})" << "\n";
    std::ofstream(dir / "tofu.jsonl") << R"({"question":"Where was A born?","answer":"A was born in X."})" << "\n";
    const std::string args = "build-dataset --authors " + (dir / "authors.jsonl") + " --tofu " + (dir / "tofu.jsonl") +
                             " --out " + (dir / "out") + " --set paths.cache_dir=" + (dir / "cache") +
                             " --set endpoints.gpt-4o.credential_env=COTFORGET_TEST_UNSET_KEY"
                             " --set endpoints.deepseek-r1.credential_env=COTFORGET_TEST_UNSET_KEY";
    ::unsetenv("COTFORGET_TEST_UNSET_KEY");
    CHECK(run_cli(args, dir / "log") == 2);
}

TEST_CASE("finetune, baseline, unlearn, evaluate, probe and report through the CLI") {
    cftest::TempDir dir;
    write_tiny_config(dir);
    const std::string cfg = " --config " + (dir / "tiny.json") + " --log-level warn";
    const std::string corpus = dir / "corpus.jsonl";

    REQUIRE(run_cli("finetune --corpus " + corpus + " --out " + (dir / "target") + cfg, dir / "log") == 0);
    CHECK(fs::exists(dir / "target/summary.json"));
    CHECK(fs::exists(dir / "target/params.bin"));

    CHECK(run_cli("evaluate --checkpoint " + (dir / "target") + " --corpus " + corpus + " --out " + (dir / "ev") + cfg,
                  dir / "log") == 1);
    CHECK(cotforget::read_file(dir / "log").find("--snapshot-baseline") != std::string::npos);

    REQUIRE(run_cli("unlearn --method ga --strategy cot_only --target " + (dir / "target") + " --corpus " + corpus +
                        " --runs " + (dir / "runs") + cfg,
                    dir / "log") == 0);
    std::string run_dir;
    for (const auto& e : fs::directory_iterator(dir / "runs")) run_dir = e.path().string();
    REQUIRE_FALSE(run_dir.empty());
    for (const char* f : {"summary.json", "records.json", "run.json", "baseline.jsonl", "split.json",
                          "epoch0/report.json", "epoch1/aggregate.json", "epoch2/report.json"}) {
        CAPTURE(f);
        CHECK(fs::exists(fs::path(run_dir) / f));
    }
    const auto summary = nlohmann::json::parse(cotforget::read_file(run_dir + "/summary.json"));
    CHECK(summary["records"].size() == 2);

    // Baseline snapshot, then scoring the unlearned checkpoint against it.
    REQUIRE(run_cli("evaluate --checkpoint " + (dir / "target") + " --corpus " + run_dir + "/corpus.jsonl" +
                        " --snapshot-baseline " + (dir / "ev/baseline.jsonl") + cfg,
                    dir / "log") == 0);
    REQUIRE(run_cli("evaluate --checkpoint " + run_dir + "/epoch2 --corpus " + run_dir + "/corpus.jsonl" +
                        " --baseline " + (dir / "ev/baseline.jsonl") + " --out " + (dir / "ev") + cfg,
                    dir / "log") == 0);
    CHECK(fs::exists(dir / "ev/report.json"));
    CHECK(fs::exists(dir / "ev/aggregate.json"));

    REQUIRE(run_cli("probe-decoding --run " + run_dir + " --modes default,zero --out " + (dir / "probe") + cfg,
                    dir / "log") == 0);
    CHECK(fs::exists(dir / "probe/curves.csv"));
    CHECK(fs::exists(dir / "probe/cs.svg"));
    CHECK(run_cli("probe-decoding --run " + run_dir + " --modes , --out " + (dir / "probe2") + cfg, dir / "log") == 1);

    REQUIRE(run_cli("report --run " + run_dir + " --out " + (dir / "report") + cfg, dir / "log") == 0);
    const auto csv = cotforget::read_file(dir / "report/grid.csv");
    CHECK(csv.find("ga,cot_only,forget10,") != std::string::npos);
    CHECK(cotforget::read_file(dir / "log").find("Avg.") != std::string::npos);
}
