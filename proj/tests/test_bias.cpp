#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "corrfair/bias.hpp"
#include "oracles.hpp"

using namespace corrfair;

namespace {

struct Fixture {
    PromptSet prompts;
    ScoreSet scores;
};

// One prompt per toxicity value, all under the given variant/model, seed 0.
Fixture flat_fixture(const std::vector<std::vector<double>>& per_subgroup,
                     const VariantId& variant = VariantId::original(),
                     const std::string& model = "model-a") {
    Fixture f;
    for (std::size_t s = 0; s < per_subgroup.size(); ++s) {
        for (std::size_t i = 0; i < per_subgroup[s].size(); ++i) {
            PromptRecord p;
            p.id = "p" + std::to_string(s) + "_" + std::to_string(i) + "_" + variant.str();
            p.metric = "m1";
            p.dimension = "gender";
            p.subgroup = "s" + std::to_string(s);
            p.variant = variant;
            p.text = "prompt text";
            if (!variant.is_original()) {
                PromptRecord parent = p;
                parent.id = "orig_" + p.id;
                parent.variant = VariantId::original();
                parent.parent_id.clear();
                f.prompts.add(parent);
                p.parent_id = parent.id;
            }
            f.prompts.add(p);
            f.scores.add({p.id, model, 0, "cont", per_subgroup[s][i], {}});
        }
    }
    return f;
}

}  // namespace

TEST_CASE("subgroup mean over prompts and seeds") {
    auto f = flat_fixture({{0.2, 0.4}});
    CHECK(subgroup_mean_toxicity(f.scores, f.prompts, "m1", "gender", "s0", VariantId::original(),
                                 "model-a") == Catch::Approx(0.3).margin(1e-15));

    // Constant input returns the constant exactly.
    auto g = flat_fixture({{0.1, 0.1, 0.1}});
    CHECK(subgroup_mean_toxicity(g.scores, g.prompts, "m1", "gender", "s0", VariantId::original(),
                                 "model-a") == 0.1);

    CHECK_THROWS_AS(subgroup_mean_toxicity(f.scores, f.prompts, "m1", "gender", "missing",
                                           VariantId::original(), "model-a"),
                    EmptySubgroup);
    CHECK_THROWS_AS(subgroup_mean_toxicity(f.scores, f.prompts, "m1", "gender", "s0",
                                           VariantId::original(), "other-model"),
                    EmptySubgroup);
}

TEST_CASE("subgroup mean pools 3 prompts x 5 seeds") {
    Fixture f;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> all;
    for (int p = 0; p < 3; ++p) {
        PromptRecord rec;
        rec.id = "p" + std::to_string(p);
        rec.metric = "m1";
        rec.dimension = "gender";
        rec.subgroup = "s0";
        rec.variant = VariantId::original();
        rec.text = "x";
        f.prompts.add(rec);
        for (int seed = 0; seed < 5; ++seed) {
            const double tox = dist(rng);
            all.push_back(tox);
            f.scores.add({rec.id, "model-a", seed, "c", tox, {}});
        }
    }
    long double sum = 0;
    for (double v : all) sum += v;
    const double expected = static_cast<double>(sum / all.size());
    CHECK(subgroup_mean_toxicity(f.scores, f.prompts, "m1", "gender", "s0", VariantId::original(),
                                 "model-a") == Catch::Approx(expected).margin(1e-15));
}

TEST_CASE("bias score hand cases") {
    auto f = flat_fixture({{0.2}, {0.4}});
    CHECK(bias_score(f.scores, f.prompts, "m1", "gender", VariantId::original(), "model-a") ==
          Catch::Approx(0.2).margin(1e-15));

    auto g = flat_fixture({{0.3, 0.3}, {0.3}, {0.3, 0.3, 0.3}});
    CHECK(bias_score(g.scores, g.prompts, "m1", "gender", VariantId::original(), "model-a") == 0.0);

    auto h = flat_fixture({{0.1}, {0.3}, {0.5}, {0.7}});
    const double expected = oracles::naive_bias_score({{0.1}, {0.3}, {0.5}, {0.7}});
    CHECK(expected == Catch::Approx(0.8).margin(1e-15));
    CHECK(bias_score(h.scores, h.prompts, "m1", "gender", VariantId::original(), "model-a") ==
          Catch::Approx(expected).margin(1e-15));
}

TEST_CASE("single subgroup warns and scores zero") {
    auto f = flat_fixture({{0.2, 0.6}});
    WarningSink warnings;
    CHECK(bias_score(f.scores, f.prompts, "m1", "gender", VariantId::original(), "model-a", {},
                     &warnings) == 0.0);
    REQUIRE(warnings.entries.size() == 1);
    CHECK(warnings.entries[0].find("single subgroup") != std::string::npos);
}

TEST_CASE("bias score matches the oracle on randomized fixtures") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> tox(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t groups = 2 + rng() % 7;
        std::vector<std::vector<double>> data(groups);
        for (auto& g : data) {
            const std::size_t prompts = 1 + rng() % 20;
            for (std::size_t i = 0; i < prompts; ++i) g.push_back(tox(rng));
        }
        auto f = flat_fixture(data);
        CHECK(bias_score(f.scores, f.prompts, "m1", "gender", VariantId::original(), "model-a") ==
              Catch::Approx(oracles::naive_bias_score(data)).margin(1e-12));

        BiasOptions norm;
        norm.normalize_by_subgroups = true;
        CHECK(bias_score(f.scores, f.prompts, "m1", "gender", VariantId::original(), "model-a",
                         norm) == Catch::Approx(oracles::naive_bias_score(data, true)).margin(1e-12));
    }
}

TEST_CASE("bias score invariances") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> tox(0.0, 0.5);
    std::vector<std::vector<double>> data{{0.1, 0.2}, {0.3}, {0.05, 0.44, 0.31}};

    auto base = flat_fixture(data);
    const double r0 =
        bias_score(base.scores, base.prompts, "m1", "gender", VariantId::original(), "model-a");
    CHECK(r0 >= 0.0);

    SECTION("permutation of subgroups and prompts") {
        auto shuffled = data;
        std::reverse(shuffled.begin(), shuffled.end());
        std::reverse(shuffled[2].begin(), shuffled[2].end());
        auto f = flat_fixture(shuffled);
        CHECK(bias_score(f.scores, f.prompts, "m1", "gender", VariantId::original(), "model-a") ==
              Catch::Approx(r0).margin(1e-15));
    }

    SECTION("constant shift on random data within 1e-12") {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::vector<double>> d(2 + rng() % 5);
            for (auto& g : d) {
                const std::size_t n = 1 + rng() % 8;
                for (std::size_t i = 0; i < n; ++i) g.push_back(tox(rng));
            }
            const double shift = 0.25;
            auto shifted = d;
            for (auto& g : shifted)
                for (double& v : g) v += shift;
            auto fa = flat_fixture(d);
            auto fb = flat_fixture(shifted);
            const double ba =
                bias_score(fa.scores, fa.prompts, "m1", "gender", VariantId::original(), "model-a");
            const double bb =
                bias_score(fb.scores, fb.prompts, "m1", "gender", VariantId::original(), "model-a");
            CHECK(ba == Catch::Approx(bb).margin(1e-12));
        }
    }

    SECTION("constant shift exact on a dyadic grid") {
        // Values and shift on multiples of 1/64; 4 seeds-worth of values per
        // subgroup so every division is by a power of two.
        std::vector<std::vector<double>> d{{4.0 / 64, 8.0 / 64, 12.0 / 64, 16.0 / 64},
                                           {6.0 / 64, 10.0 / 64, 18.0 / 64, 2.0 / 64},
                                           {1.0 / 64, 3.0 / 64, 5.0 / 64, 7.0 / 64},
                                           {20.0 / 64, 22.0 / 64, 24.0 / 64, 26.0 / 64}};
        const double shift = 5.0 / 64;
        auto shifted = d;
        for (auto& g : shifted)
            for (double& v : g) v += shift;
        auto fa = flat_fixture(d);
        auto fb = flat_fixture(shifted);
        CHECK(bias_score(fa.scores, fa.prompts, "m1", "gender", VariantId::original(), "model-a") ==
              bias_score(fb.scores, fb.prompts, "m1", "gender", VariantId::original(), "model-a"));
    }

    SECTION("zero iff all subgroup means equal") {
        auto eq = flat_fixture({{0.25, 0.75}, {0.5}, {0.375, 0.625}});  // all means exactly 0.5
        CHECK(bias_score(eq.scores, eq.prompts, "m1", "gender", VariantId::original(), "model-a") ==
              0.0);
        auto ne = flat_fixture({{0.2, 0.4}, {0.3 + 1e-6}});
        CHECK(bias_score(ne.scores, ne.prompts, "m1", "gender", VariantId::original(), "model-a") >
              1e-12);
    }
}

TEST_CASE("bias vector per roster") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> tox(0.0, 1.0);
    Fixture f;
    const std::vector<AssessedModelId> roster{"m0", "m1", "m2", "m3", "m4",
                                              "m5", "m6", "m7", "m8", "m9"};
    for (int s = 0; s < 3; ++s) {
        for (int p = 0; p < 2; ++p) {
            PromptRecord rec;
            rec.id = "p" + std::to_string(s) + "_" + std::to_string(p);
            rec.metric = "bold";
            rec.dimension = "religion";
            rec.subgroup = "g" + std::to_string(s);
            rec.variant = VariantId::original();
            rec.text = "x";
            f.prompts.add(rec);
            for (const auto& m : roster) f.scores.add({rec.id, m, 0, "c", tox(rng), {}});
        }
    }

    const BiasVector v =
        bias_vector(f.scores, f.prompts, "bold", "religion", VariantId::original(), roster);
    REQUIRE(v.values.size() == roster.size());
    for (std::size_t i = 0; i < roster.size(); ++i) {
        CHECK(v.values[i] == bias_score(f.scores, f.prompts, "bold", "religion",
                                        VariantId::original(), roster[i]));
    }

    SECTION("roster permutation permutes values") {
        auto perm = roster;
        std::reverse(perm.begin(), perm.end());
        const BiasVector w =
            bias_vector(f.scores, f.prompts, "bold", "religion", VariantId::original(), perm);
        for (std::size_t i = 0; i < roster.size(); ++i)
            CHECK(w.values[i] == v.values[roster.size() - 1 - i]);
    }

    SECTION("single model roster") {
        const std::vector<AssessedModelId> one{"m0"};
        CHECK(bias_vector(f.scores, f.prompts, "bold", "religion", VariantId::original(), one)
                  .values.size() == 1);
    }

    SECTION("missing model reported") {
        std::vector<AssessedModelId> extended = roster;
        extended.push_back("m10");
        try {
            bias_vector(f.scores, f.prompts, "bold", "religion", VariantId::original(), extended);
            FAIL("expected IncompleteScores");
        } catch (const IncompleteScores& e) {
            REQUIRE(e.missing.size() == 3);  // one per subgroup
            CHECK(e.missing[0].find("m10") != std::string::npos);
        }
    }
}

TEST_CASE("combination bias vector") {
    auto mk = [](const std::string& source, std::vector<double> vals) {
        BiasVector v;
        v.metric = "m1";
        v.dimension = "gender";
        v.source = source;
        v.roster = {"a", "b", "c"};
        v.values = std::move(vals);
        return v;
    };

    const BiasVector orig = mk("original", {0.1, 0.2, 0.3});
    const BiasVector v1 = mk("aug#1", {0.3, 0.1, 0.6});
    const BiasVector v2 = mk("aug#2", {0.2, 0.6, 0.0});

    SECTION("single member is identity") {
        const auto out = combination_bias_vector(std::vector<BiasVector>{orig});
        CHECK(out.values == orig.values);
    }

    SECTION("mean of duplicates is idempotent") {
        const auto out = combination_bias_vector(std::vector<BiasVector>{orig, orig});
        CHECK(out.values == orig.values);
    }

    SECTION("three members average element-wise") {
        const auto out = combination_bias_vector(std::vector<BiasVector>{orig, v1, v2});
        for (std::size_t i = 0; i < 3; ++i) {
            const long double expect =
                (static_cast<long double>(orig.values[i]) + v1.values[i] + v2.values[i]) / 3.0L;
            CHECK(out.values[i] == Catch::Approx(static_cast<double>(expect)).margin(1e-15));
        }
    }

    SECTION("member order does not matter") {
        const auto a = combination_bias_vector(std::vector<BiasVector>{orig, v1, v2});
        const auto b = combination_bias_vector(std::vector<BiasVector>{v2, orig, v1});
        CHECK(a.values == b.values);
    }

    SECTION("bounded by member min and max") {
        const auto out = combination_bias_vector(std::vector<BiasVector>{orig, v1, v2});
        for (std::size_t i = 0; i < 3; ++i) {
            const double lo = std::min({orig.values[i], v1.values[i], v2.values[i]});
            const double hi = std::max({orig.values[i], v1.values[i], v2.values[i]});
            CHECK(out.values[i] >= lo - 1e-15);
            CHECK(out.values[i] <= hi + 1e-15);
        }
    }

    SECTION("errors") {
        CHECK_THROWS_AS(combination_bias_vector(std::vector<BiasVector>{v1, v2}), MissingOriginal);
        BiasVector other = v1;
        other.roster = {"a", "b"};
        other.values = {0.1, 0.2};
        CHECK_THROWS_AS(combination_bias_vector(std::vector<BiasVector>{orig, other}),
                        MismatchedRoster);
    }
}

TEST_CASE("subgroup unification merges and drops labels") {
    // Two raw labels map to one canonical group; a third is unmapped and dropped.
    Fixture f;
    auto add_prompt = [&](const std::string& id, const std::string& subgroup, double tox) {
        PromptRecord rec;
        rec.id = id;
        rec.metric = "m1";
        rec.dimension = "gender";
        rec.subgroup = subgroup;
        rec.variant = VariantId::original();
        rec.text = "x";
        f.prompts.add(rec);
        f.scores.add({id, "model-a", 0, "c", tox, {}});
    };
    add_prompt("a1", "raw_a1", 0.2);
    add_prompt("a2", "raw_a2", 0.4);
    add_prompt("b1", "raw_b", 0.7);
    add_prompt("junk", "raw_junk", 0.99);

    UnificationMap unify;
    unify.by_metric["m1"] = {{"raw_a1", "canon_a"}, {"raw_a2", "canon_a"}, {"raw_b", "canon_b"}};
    BiasOptions opts;
    opts.unification = &unify;

    BiasAggregator agg(f.scores, f.prompts, "m1", "gender", opts);
    CHECK(agg.labels() == std::vector<std::string>{"canon_a", "canon_b"});
    CHECK(agg.subgroup_mean(VariantId::original(), "canon_a", "model-a") ==
          Catch::Approx(0.3).margin(1e-15));
    // canonical means 0.3 and 0.7 -> bias |0.5-0.3| + |0.5-0.7| = 0.4
    CHECK(agg.bias(VariantId::original(), "model-a") == Catch::Approx(0.4).margin(1e-15));
}

TEST_CASE("score gap detection") {
    auto f = flat_fixture({{0.2}, {0.4}});
    const std::vector<AssessedModelId> roster{"model-a", "model-b"};
    const std::vector<int> seeds{0, 1};
    const auto gaps = find_score_gaps(f.scores, f.prompts, roster, seeds);
    // fixture has model-a seed 0 only: missing model-a seed 1 and model-b both seeds
    CHECK(gaps.size() == 2 * 3);
}
