#include <catch2/catch_amalgamated.hpp>

#include "corrfair/bias.hpp"
#include "corrfair/simulate.hpp"
#include "corrfair/stats.hpp"

using namespace corrfair;

namespace {

sim::SimSpec two_metric_spec() {
    sim::SimSpec spec;
    spec.metrics = {{"ma", "gender", {"a1", "a2", "a3"}, 2},
                    {"mb", "gender", {"b1", "b2", "b3"}, 2}};
    spec.augmenters = {{"augA", 2}, {"augB", 2}};
    spec.models = {"m0", "m1", "m2", "m3"};
    spec.latent_trait = {{"m0", 0.02}, {"m1", 0.05}, {"m2", 0.08}, {"m3", 0.11}};
    spec.subgroup_loadings = {{"a1", 0.2}, {"a2", 0.5}, {"a3", 0.8},
                              {"b1", 0.3}, {"b2", 0.5}, {"b3", 0.7}};
    spec.base_toxicity = 0.25;
    spec.master_seed = 99;
    return spec;
}

}  // namespace

TEST_CASE("non-signal variant at zero noise is exactly the base") {
    auto spec = two_metric_spec();
    spec.noise_scale = 0.0;
    // no signal variants at all
    for (const auto& model : spec.models) {
        CHECK(sim::sim_toxicity(spec, model, VariantId::original(), "a1", "p0", 0) ==
              spec.base_toxicity);
        CHECK(sim::sim_toxicity(spec, model, VariantId::paraphrase("augA", 1), "a3", "p1", 3) ==
              spec.base_toxicity);
    }
}

TEST_CASE("dyadic traits give an exact signal ratio") {
    sim::SimSpec spec;
    spec.metrics = {{"m", "gender", {"s1", "s2"}, 1}};
    spec.models = {"low", "high"};
    spec.latent_trait = {{"low", 0.125}, {"high", 0.375}};
    spec.subgroup_loadings = {{"s1", 0.5}, {"s2", 0.5}};
    spec.base_toxicity = 0.25;
    spec.signal_variants = {VariantId::original()};
    spec.noise_scale = 0.0;

    const double lo = sim::sim_toxicity(spec, "low", VariantId::original(), "s1", "p", 0);
    const double hi = sim::sim_toxicity(spec, "high", VariantId::original(), "s1", "p", 0);
    CHECK((hi - spec.base_toxicity) / (lo - spec.base_toxicity) == 3.0);
}

TEST_CASE("simulator calls are deterministic") {
    auto spec = two_metric_spec();
    spec.noise_scale = 0.07;
    spec.signal_variants = {VariantId::paraphrase("augA", 1)};
    spec.interaction_scale = 0.05;
    const double a = sim::sim_toxicity(spec, "m1", VariantId::paraphrase("augA", 1), "a2", "p7", 4);
    const double b = sim::sim_toxicity(spec, "m1", VariantId::paraphrase("augA", 1), "a2", "p7", 4);
    CHECK(a == b);
    // distinct seeds draw distinct noise
    const double c = sim::sim_toxicity(spec, "m1", VariantId::paraphrase("augA", 1), "a2", "p7", 5);
    CHECK(a != c);
}

TEST_CASE("simulator rejects identifiers outside the universe") {
    auto spec = two_metric_spec();
    CHECK_THROWS_AS(sim::sim_toxicity(spec, "nope", VariantId::original(), "a1", "p", 0), UnknownId);
    CHECK_THROWS_AS(sim::sim_toxicity(spec, "m0", VariantId::original(), "zz", "p", 0), UnknownId);
}

TEST_CASE("fixture covers the full run plan") {
    auto spec = two_metric_spec();
    spec.noise_scale = 0.03;
    const PromptSet prompts = sim::make_prompts(spec);
    // per metric: 3 subgroups x 2 prompts x (1 + 4 variants)
    CHECK(prompts.size() == 2 * 3 * 2 * 5);

    const ScoreSet scores = sim::build_fixture(spec, prompts);
    CHECK(scores.size() == prompts.size() * spec.models.size() * spec.seeds.size());

    // every cell present exactly once
    const auto gaps = find_score_gaps(scores, prompts, spec.models, spec.seeds);
    CHECK(gaps.empty());
}

TEST_CASE("fixture requires at least two subgroups per metric") {
    sim::SimSpec spec;
    spec.metrics = {{"solo", "gender", {"only"}, 2}};
    spec.models = {"m0"};
    spec.latent_trait = {{"m0", 0.1}};
    spec.subgroup_loadings = {{"only", 0.5}};
    const PromptSet prompts = sim::make_prompts(spec);
    CHECK_THROWS_AS(sim::build_fixture(spec, prompts), IncompletePromptCover);
}

TEST_CASE("master seed moves noise but not the signal skeleton") {
    auto spec = two_metric_spec();
    spec.signal_variants = {VariantId::paraphrase("augA", 1)};
    spec.noise_scale = 0.04;

    auto other = spec;
    other.master_seed = spec.master_seed + 1;

    const double n1 = sim::sim_toxicity(spec, "m2", VariantId::original(), "a1", "p0", 0);
    const double n2 = sim::sim_toxicity(other, "m2", VariantId::original(), "a1", "p0", 0);
    CHECK(n1 != n2);  // noise reshuffled

    spec.noise_scale = 0.0;
    other.noise_scale = 0.0;
    const double s1 =
        sim::sim_toxicity(spec, "m2", VariantId::paraphrase("augA", 1), "a1", "p0", 0);
    const double s2 =
        sim::sim_toxicity(other, "m2", VariantId::paraphrase("augA", 1), "a1", "p0", 0);
    CHECK(s1 == s2);  // signal unchanged (no interaction term in play)
}

TEST_CASE("all-signal zero-noise fixture makes metrics perfectly correlated") {
    auto spec = two_metric_spec();
    spec.noise_scale = 0.0;
    for (const VariantId& v : spec.all_variants()) spec.signal_variants.insert(v);
    // shared loadings across the two metrics
    spec.subgroup_loadings = {{"a1", 0.2}, {"a2", 0.5}, {"a3", 0.8},
                              {"b1", 0.2}, {"b2", 0.5}, {"b3", 0.8}};

    const PromptSet prompts = sim::make_prompts(spec);
    const ScoreSet scores = sim::build_fixture(spec, prompts);

    BiasAggregator agg_a(scores, prompts, "ma", "gender");
    BiasAggregator agg_b(scores, prompts, "mb", "gender");
    for (const VariantId& v : spec.all_variants()) {
        const auto va = agg_a.bias_vector(v, spec.models);
        const auto vb = agg_b.bias_vector(v, spec.models);
        CHECK(stats::pearson(va.values, vb.values) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("interaction term is shared through concepts") {
    auto spec = two_metric_spec();
    spec.noise_scale = 0.0;
    spec.interaction_scale = 0.2;
    spec.latent_trait = {{"m0", 0.0}, {"m1", 0.0}, {"m2", 0.0}, {"m3", 0.0}};
    spec.signal_variants = {VariantId::original()};
    spec.subgroup_concept = {{"a1", "g1"}, {"b1", "g1"}};  // a1 and b1 share a concept

    const double a = sim::sim_toxicity(spec, "m2", VariantId::original(), "a1", "pa", 0);
    const double b = sim::sim_toxicity(spec, "m2", VariantId::original(), "b1", "pb", 1);
    CHECK(a == b);  // same model, same concept -> same affinity

    const double c = sim::sim_toxicity(spec, "m2", VariantId::original(), "a2", "pa", 0);
    CHECK(a != c);  // different concept -> different affinity
}
