// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "cotforget/aggregation.hpp"
#include "cotforget/error.hpp"

using namespace cotforget;

namespace {

MetricReport full_report(double utility, double forget_side) {
    MetricReport r;
    for (const char* set : {"real_authors", "world_facts", "retain"}) {
        auto& s = r.sets[set];
        for (const char* m : {"rouge", "cs", "te", "es"}) s.per_set[m] = utility;
    }
    auto& f = r.sets["forget"];
    for (const char* m : {"rouge", "cs", "es", "sw_rouge", "sw_cs", "judge"}) f.per_set[m] = forget_side;
    return r;
}

}  // namespace

TEST_CASE("harmonic mean identities and bounds") {
    CHECK(harmonic_mean(std::vector<double>{0.4, 0.4, 0.4}) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(harmonic_mean(std::vector<double>{0.5, 1.0}) == doctest::Approx(2.0 / 3.0));
    CHECK(harmonic_mean(std::vector<double>{0.0, 1.0}) == doctest::Approx(2.0 / (1e6 + 1.0)));
    CHECK_THROWS(harmonic_mean(std::vector<double>{}));

    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> n(1, 12);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(n(rng));
        double am = 0.0;
        for (auto& x : v) am += (x = u(rng));
        am /= static_cast<double>(v.size());
        const double hm = harmonic_mean(v);
        CHECK(hm <= am + 1e-12);
        CHECK(hm <= *std::max_element(v.begin(), v.end()) + 1e-12);
    }
}

TEST_CASE("invert maps forget scores to efficacy") {
    CHECK(invert(0.25) == 0.75);
    CHECK(invert(0.0) == 1.0);
    CHECK_THROWS(invert(1.2));
    CHECK_THROWS(invert(-0.1));
}

TEST_CASE("MU, AFE and CFE use the right components") {
    const auto agg = aggregate(full_report(0.6, 0.3));
    CHECK(agg.mu == doctest::Approx(0.6));
    CHECK(agg.afe == doctest::Approx(0.7));
    CHECK(agg.cfe == doctest::Approx(0.7));
    CHECK(agg.components.size() == 12 + 3 + 3);
    CHECK(agg.components.at("forget.judge").inverted);
    CHECK(agg.components.at("forget.judge").used == doctest::Approx(0.7));
    CHECK_FALSE(agg.components.at("retain.te").inverted);
    CHECK(agg.avg() == doctest::Approx((0.6 + 0.7 + 0.7) / 3));
    CHECK(agg.to_json()["components"].size() == 18);
}

TEST_CASE("a missing component is reported by name") {
    auto r = full_report(0.6, 0.3);
    r.sets["forget"].per_set.erase("judge");
    CHECK_NOTHROW(compute_afe(r));
    try {
        compute_cfe(r);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("judge") != std::string::npos);
    }
}

TEST_CASE("grid Avg. column reproduces published rows") {
    struct Row {
        double mu, afe, cfe, avg;
    };
    const Row rows[] = {{0.6309, 0.3802, 0.4301, 0.4804},
                        {0.6507, 0.3698, 0.1838, 0.4014},
                        {0.7058, 0.5688, 0.4608, 0.5785},
                        {0.6037, 0.6750, 0.5347, 0.6045}};
    for (const auto& r : rows) {
        GridRow g{"ga", "cot_only", "forget01", 1, r.mu, r.afe, r.cfe};
        CHECK(round4(g.avg()) == r.avg);
    }
    CHECK(round4(0.12345) == 0.1235);
    CHECK(round4(-0.00005) == -0.0001);
}

TEST_CASE("grid renders as csv and aligned text") {
    const std::vector<GridRow> rows{{"ga", "cot_only", "forget01", 3, 0.6309, 0.3802, 0.4301},
                                    {"po", "cot_and_answer", "forget10", 1, 0.7, 0.5, 0.25}};
    const auto csv = render_grid_csv(rows);
    CHECK(csv.rfind("method,strategy,scale,epoch,mu,afe,cfe,avg\n", 0) == 0);
    CHECK(csv.find("ga,cot_only,forget01,3,0.6309,0.3802,0.4301,0.4804") != std::string::npos);
    const auto txt = render_grid_text(rows);
    CHECK(txt.find("Avg.") != std::string::npos);
    CHECK(txt.find("0.4804") != std::string::npos);
}
