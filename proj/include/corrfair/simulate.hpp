#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "corrfair/hashing.hpp"
#include "corrfair/model.hpp"

namespace corrfair::sim {

struct SimMetricSpec {
    MetricId name;
    BiasDimension dimension;
    std::vector<std::string> subgroups;
    std::size_t prompts_per_subgroup = 3;
};

// Synthetic toxicity oracle. Per (model, variant, subgroup, prompt, seed):
//   clamp01( base
//          + [variant is a signal variant] * (trait(model)*loading(subgroup)
//                                             + interaction_scale*xi(model, concept(subgroup)))
//          + noise_scale * nu(prompt, model, variant, seed) )
// xi and nu are deterministic hash draws in [-0.5, 0.5). The concept key lets
// two metrics' distinct labels share (or not share) per-model affinities,
// which is what subgroup unification can later expose.
struct SimSpec {
    std::vector<SimMetricSpec> metrics;
    std::vector<std::pair<std::string, std::size_t>> augmenters;  // (name, paraphrases)
    std::vector<AssessedModelId> models;
    std::map<AssessedModelId, double> latent_trait;
    std::set<VariantId> signal_variants;
    std::map<std::string, double> subgroup_loadings;      // by raw label
    std::map<std::string, std::string> subgroup_concept;  // by raw label; defaults to the label
    double base_toxicity = 0.2;
    double interaction_scale = 0.0;
    double noise_scale = 0.0;
    std::vector<int> seeds{0, 1, 2, 3, 4};
    std::uint64_t master_seed = 0;

    // All variants in canonical order: original first, then per-augmenter
    // paraphrase indices.
    std::vector<VariantId> all_variants() const {
        std::vector<VariantId> out{VariantId::original()};
        for (const auto& [name, count] : augmenters)
            for (std::size_t i = 1; i <= count; ++i)
                out.push_back(VariantId::paraphrase(name, static_cast<int>(i)));
        std::sort(out.begin(), out.end());
        return out;
    }

    const std::string& concept_of(const std::string& label) const {
        auto it = subgroup_concept.find(label);
        return it == subgroup_concept.end() ? label : it->second;
    }
};

inline double sim_toxicity(const SimSpec& spec, const AssessedModelId& model,
                           const VariantId& variant, const std::string& subgroup,
                           const std::string& prompt_id, int seed) {
    auto trait_it = spec.latent_trait.find(model);
    if (trait_it == spec.latent_trait.end()) throw UnknownId("model", model);
    auto load_it = spec.subgroup_loadings.find(subgroup);
    if (load_it == spec.subgroup_loadings.end()) throw UnknownId("subgroup", subgroup);

    double value = spec.base_toxicity;
    if (spec.signal_variants.count(variant)) {
        value += trait_it->second * load_it->second;
        if (spec.interaction_scale != 0.0) {
            hashing::Keyed key(spec.master_seed);
            key.add("interaction").add(model).add(spec.concept_of(subgroup));
            value += spec.interaction_scale * key.centered_unit();
        }
    }
    if (spec.noise_scale != 0.0) {
        hashing::Keyed key(spec.master_seed);
        key.add("noise").add(prompt_id).add(model).add(variant.str()).add(seed);
        value += spec.noise_scale * key.centered_unit();
    }
    return std::clamp(value, 0.0, 1.0);
}

// Prompt universe for the spec: every metric gets prompts_per_subgroup
// originals per subgroup plus one paraphrase per (augmenter, index).
inline PromptSet make_prompts(const SimSpec& spec) {
    PromptSet prompts;
    for (const SimMetricSpec& m : spec.metrics) {
        for (const std::string& subgroup : m.subgroups) {
            for (std::size_t j = 0; j < m.prompts_per_subgroup; ++j) {
                PromptRecord orig;
                orig.id = m.name + "/" + m.dimension + "/" + subgroup + "/p" + std::to_string(j);
                orig.metric = m.name;
                orig.dimension = m.dimension;
                orig.subgroup = subgroup;
                orig.variant = VariantId::original();
                orig.text = "Prompt " + std::to_string(j) + " about " + subgroup + " for " + m.name + ".";
                prompts.add(orig);
                for (const auto& [aug, count] : spec.augmenters) {
                    for (std::size_t i = 1; i <= count; ++i) {
                        PromptRecord para = orig;
                        para.id = orig.id + "#" + aug + "#" + std::to_string(i);
                        para.variant = VariantId::paraphrase(aug, static_cast<int>(i));
                        para.parent_id = orig.id;
                        para.text = orig.text + " (reworded " + aug + " " + std::to_string(i) + ")";
                        prompts.add(para);
                    }
                }
            }
        }
    }
    return prompts;
}

// Complete scored grid over prompts x models x seeds, byte-stable under the
// master seed. Placeholder continuation text; the numbers carry the signal.
inline ScoreSet build_fixture(const SimSpec& spec, const PromptSet& prompts) {
    for (const SimMetricSpec& m : spec.metrics) {
        std::set<std::string> seen;
        for (const PromptRecord& p : prompts.records())
            if (p.metric == m.name && p.dimension == m.dimension) seen.insert(p.subgroup);
        if (seen.size() < 2)
            throw IncompletePromptCover("metric " + m.name + " covers " +
                                        std::to_string(seen.size()) + " subgroup(s); need >= 2");
    }
    ScoreSet scores;
    for (const PromptRecord& p : prompts.records()) {
        for (const AssessedModelId& model : spec.models) {
            for (int seed : spec.seeds) {
                ScoredContinuation s;
                s.prompt_id = p.id;
                s.model = model;
                s.seed = seed;
                s.continuation = "sim continuation";
                s.toxicity = sim_toxicity(spec, model, p.variant, p.subgroup, p.id, seed);
                scores.add(std::move(s));
            }
        }
    }
    return scores;
}

}  // namespace corrfair::sim
