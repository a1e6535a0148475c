#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrfair/augment.hpp"
#include "corrfair/fsutil.hpp"
#include "corrfair/hashing.hpp"
#include "corrfair/score.hpp"
#include "corrfair/simulate.hpp"

namespace corrfair {

using nlohmann::json;

struct MetricConfig {
    MetricId name;
    BiasDimension dimension;
    std::filesystem::path prompts_file;
};

// One declarative run description; flags may override individual fields.
struct RunConfig {
    std::vector<MetricConfig> metrics;
    std::vector<augment::AugmenterConfig> augmenters;
    std::vector<score::ModelEndpoint> assessed_models;
    score::GenerationConfig generation;
    score::ScoreChannel score_channel;
    std::optional<std::filesystem::path> scores_file;       // pre-scored ingest route
    std::optional<std::filesystem::path> unification_file;  // subgroup unification map
    std::size_t k_lo = 1;
    std::size_t k_hi = 16;
    std::size_t top_n = 5;
    std::filesystem::path output_dir = "out";
    std::uint64_t master_seed = 0;
    bool pooled_combination_bias = false;
    bool normalize_bias_by_subgroups = false;
    std::size_t concurrency = 4;

    std::optional<sim::SimSpec> simulate;
    std::filesystem::path sim_prompts_out;  // written by the simulate command
    std::filesystem::path sim_scores_out;

    json raw;  // as loaded; source of all content digests
    std::filesystem::path base_dir;

    std::vector<AssessedModelId> roster() const {
        std::vector<AssessedModelId> out;
        for (const auto& m : assessed_models) out.push_back(m.name);
        return out;
    }

    std::string digest() const { return hashing::content_key(raw.dump()); }

    std::string section_dump(const char* key) const {
        return raw.contains(key) ? raw.at(key).dump() : "{}";
    }

    static RunConfig load(const std::filesystem::path& path) {
        json j;
        try {
            j = json::parse(fsutil::read_file(path));
        } catch (const json::exception& e) {
            throw ConfigError("config '" + path.string() + "': " + e.what());
        }
        return from_json(std::move(j), path.has_parent_path() ? path.parent_path() : ".");
    }

    static RunConfig from_json(json j, std::filesystem::path base_dir) {
        RunConfig cfg;
        cfg.base_dir = std::move(base_dir);
        cfg.raw = j;
        try {
            parse_into(cfg, j);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        return cfg;
    }

  private:
    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    static void parse_into(RunConfig& cfg, const json& j) {
        for (const auto& m : j.value("metrics", json::array())) {
            MetricConfig mc;
            mc.name = m.at("name").get<std::string>();
            mc.dimension = m.at("dimension").get<std::string>();
            if (m.contains("prompts_file"))
                mc.prompts_file = cfg.resolve(m.at("prompts_file").get<std::string>());
            cfg.metrics.push_back(std::move(mc));
        }
        for (const auto& a : j.value("augmenters", json::array())) {
            augment::AugmenterConfig ac;
            ac.name = a.at("name").get<std::string>();
            ac.endpoint_url = a.value("endpoint_url", "");
            ac.api_style = augment::parse_api_style(a.value("api_style", "chat"));
            ac.temperature = a.value("temperature", ac.temperature);
            ac.top_p = a.value("top_p", ac.top_p);
            ac.max_tokens = a.value("max_tokens", ac.max_tokens);
            ac.paraphrases_per_prompt = a.value("paraphrases_per_prompt", ac.paraphrases_per_prompt);
            ac.model = a.value("model", "");
            ac.api_key_env = a.value("api_key_env", "");
            cfg.augmenters.push_back(std::move(ac));
        }
        for (const auto& m : j.value("assessed_models", json::array())) {
            score::ModelEndpoint ep;
            ep.name = m.at("name").get<std::string>();
            ep.endpoint_url = m.value("endpoint_url", "");
            ep.api_key_env = m.value("api_key_env", "");
            ep.chat = m.value("chat", false);
            ep.payload_model = m.value("model", "");
            cfg.assessed_models.push_back(std::move(ep));
        }
        if (j.contains("generation")) {
            const auto& g = j.at("generation");
            cfg.generation.max_new_tokens = g.value("max_new_tokens", cfg.generation.max_new_tokens);
            cfg.generation.min_new_tokens = g.value("min_new_tokens", cfg.generation.min_new_tokens);
            cfg.generation.sampling = g.value("sampling", cfg.generation.sampling);
            cfg.generation.beams = g.value("beams", cfg.generation.beams);
        }
        if (j.contains("seeds")) cfg.generation.seeds = j.at("seeds").get<std::vector<int>>();
        if (j.contains("score_channel")) {
            const auto& s = j.at("score_channel");
            cfg.score_channel.name = s.value("name", cfg.score_channel.name);
            cfg.score_channel.endpoint_url = s.value("endpoint_url", "");
            cfg.score_channel.api_key_env = s.value("api_key_env", "");
            cfg.score_channel.batch_size = s.value("batch_size", cfg.score_channel.batch_size);
        }
        if (j.contains("scores_file"))
            cfg.scores_file = cfg.resolve(j.at("scores_file").get<std::string>());
        if (j.contains("subgroup_unification"))
            cfg.unification_file = cfg.resolve(j.at("subgroup_unification").get<std::string>());
        if (j.contains("k_range")) {
            const auto& k = j.at("k_range");
            if (!k.is_array() || k.size() != 2)
                throw ConfigError("k_range must be [lo, hi]");
            cfg.k_lo = k[0].get<std::size_t>();
            cfg.k_hi = k[1].get<std::size_t>();
        }
        cfg.top_n = j.value("top_n", cfg.top_n);
        if (j.contains("output_dir"))
            cfg.output_dir = cfg.resolve(j.at("output_dir").get<std::string>());
        cfg.master_seed = j.value("master_seed", cfg.master_seed);
        cfg.pooled_combination_bias = j.value("pooled_combination_bias", false);
        cfg.normalize_bias_by_subgroups = j.value("normalize_bias_by_subgroups", false);
        cfg.concurrency = j.value("concurrency", cfg.concurrency);

        if (j.contains("simulate")) parse_simulate(cfg, j.at("simulate"));
    }

    static void parse_simulate(RunConfig& cfg, const json& s) {
        sim::SimSpec spec;
        for (const auto& m : s.value("metrics", json::array())) {
            sim::SimMetricSpec ms;
            ms.name = m.at("name").get<std::string>();
            ms.dimension = m.at("dimension").get<std::string>();
            ms.subgroups = m.at("subgroups").get<std::vector<std::string>>();
            ms.prompts_per_subgroup = m.value("prompts_per_subgroup", ms.prompts_per_subgroup);
            spec.metrics.push_back(std::move(ms));
        }
        for (const auto& a : s.value("augmenters", json::array()))
            spec.augmenters.emplace_back(a.at("name").get<std::string>(),
                                         a.at("paraphrases").get<std::size_t>());
        for (const auto& m : s.value("models", json::array())) {
            const auto name = m.at("name").get<AssessedModelId>();
            spec.models.push_back(name);
            spec.latent_trait[name] = m.value("latent_trait", 0.0);
        }
        for (const auto& v : s.value("signal_variants", json::array()))
            spec.signal_variants.insert(VariantId::parse(v.get<std::string>()));
        if (s.contains("subgroup_loadings"))
            spec.subgroup_loadings =
                s.at("subgroup_loadings").get<std::map<std::string, double>>();
        if (s.contains("subgroup_concepts"))
            spec.subgroup_concept =
                s.at("subgroup_concepts").get<std::map<std::string, std::string>>();
        spec.base_toxicity = s.value("base_toxicity", spec.base_toxicity);
        spec.interaction_scale = s.value("interaction_scale", spec.interaction_scale);
        spec.noise_scale = s.value("noise_scale", spec.noise_scale);
        if (s.contains("seeds")) spec.seeds = s.at("seeds").get<std::vector<int>>();
        spec.master_seed = s.value("master_seed", cfg.master_seed);

        cfg.sim_prompts_out = cfg.resolve(s.value("prompts_out", "sim_prompts.jsonl"));
        cfg.sim_scores_out = cfg.resolve(s.value("scores_out", "sim_scores.jsonl"));
        cfg.simulate = std::move(spec);
    }
};

}  // namespace corrfair
