#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrfair/bias.hpp"
#include "corrfair/cache.hpp"
#include "corrfair/config.hpp"
#include "corrfair/jsonl.hpp"
#include "corrfair/report.hpp"
#include "corrfair/search.hpp"
#include "corrfair/simulate.hpp"

namespace corrfair::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitPartial = 2;

enum class Stage { kAugment, kGenerate, kScore, kBias, kSearch, kReport };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::kAugment: return "augment";
        case Stage::kGenerate: return "generate";
        case Stage::kScore: return "score";
        case Stage::kBias: return "bias";
        case Stage::kSearch: return "search";
        case Stage::kReport: return "report";
    }
    return "?";
}

// One lock file per output directory; concurrent runs fail fast instead of
// interleaving writes.
class DirLock {
  public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw ConfigError("output directory is locked by another run: " + path_.string());
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    fs::path path_;
    int fd_ = -1;
};

namespace detail {

inline std::string sanitize(const std::string& name) {
    std::string out;
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
    return out;
}

inline std::string pair_slug(const MetricId& a, const MetricId& b, const BiasDimension& dim) {
    return sanitize(a) + "-" + sanitize(b) + "_" + sanitize(dim);
}

}  // namespace detail

// Digest-keyed stage cache: a stage re-runs only when its input digest or any
// recorded output digest changed.
class StageCache {
  public:
    StageCache(fs::path manifest_dir, std::ostream& log)
        : dir_(std::move(manifest_dir)), log_(log) {}

    bool up_to_date(const std::string& stage, const std::string& input_digest,
                    const std::vector<fs::path>& outputs) const {
        const fs::path manifest = dir_ / (stage + ".json");
        if (!fs::exists(manifest)) return false;
        json m;
        try {
            m = json::parse(fsutil::read_file(manifest));
        } catch (...) {
            return false;
        }
        if (m.value("input_digest", "") != input_digest) return false;
        for (const fs::path& out : outputs) {
            if (!fs::exists(out)) return false;
            const auto recorded = m["outputs"].value(out.filename().string(), "");
            if (recorded.empty() || recorded != fsutil::file_digest(out)) return false;
        }
        return true;
    }

    void record(const std::string& stage, const std::string& input_digest,
                const std::vector<fs::path>& outputs) const {
        json outs = json::object();
        for (const fs::path& out : outputs) outs[out.filename().string()] = fsutil::file_digest(out);
        fsutil::write_file_atomic(dir_ / (stage + ".json"),
                                  json{{"stage", stage},
                                       {"input_digest", input_digest},
                                       {"outputs", outs}}
                                      .dump(2));
    }

    // Runs the body unless inputs and outputs are unchanged. A body returning
    // false signals an incomplete stage: no manifest is recorded, so the next
    // run retries it (request-level caches make the redo cheap).
    bool run(const std::string& stage, const std::string& input_digest,
             const std::vector<fs::path>& outputs, const std::function<bool()>& body) const {
        if (up_to_date(stage, input_digest, outputs)) {
            log_ << "[" << stage << "] cached\n";
            return false;
        }
        log_ << "[" << stage << "] running\n";
        if (body()) record(stage, input_digest, outputs);
        return true;
    }

  private:
    fs::path dir_;
    std::ostream& log_;
};

struct PipelineResult {
    int exit_code = kExitOk;
    std::vector<std::string> messages;
};

class Runner {
  public:
    Runner(RunConfig cfg, http::Transport& transport, std::ostream& log,
           std::ostream* trace = nullptr)
        : cfg_(std::move(cfg)), transport_(transport), log_(log), trace_(trace) {}

    // --- output paths -------------------------------------------------------

    fs::path out(const std::string& rel) const { return cfg_.output_dir / rel; }
    fs::path prompts_path() const { return out("prompts_combined.jsonl"); }
    fs::path augment_manifest_path() const { return out("augment_manifest.json"); }
    fs::path generated_path() const { return out("generated.jsonl"); }
    fs::path scores_path() const { return out("scores.jsonl"); }
    fs::path gaps_path(const std::string& stage) const { return out("gaps_" + stage + ".json"); }
    fs::path bias_path() const { return out("bias_vectors.json"); }
    fs::path selection_path(const MetricId& a, const MetricId& b, const BiasDimension& d) const {
        return out("selections/selection_" + detail::pair_slug(a, b, d) + ".json");
    }
    fs::path report_dir() const { return out("reports"); }

    // Metric pairs sharing a dimension, in config order.
    std::vector<std::pair<MetricConfig, MetricConfig>> metric_pairs() const {
        std::vector<std::pair<MetricConfig, MetricConfig>> pairs;
        for (std::size_t i = 0; i < cfg_.metrics.size(); ++i)
            for (std::size_t j = i + 1; j < cfg_.metrics.size(); ++j)
                if (cfg_.metrics[i].dimension == cfg_.metrics[j].dimension)
                    pairs.emplace_back(cfg_.metrics[i], cfg_.metrics[j]);
        return pairs;
    }

    PipelineResult run(Stage through) {
        PipelineResult result;
        try {
            DirLock lock(cfg_.output_dir);
            fs::create_directories(out("manifests"));
            StageCache stages(out("manifests"), log_);

            int code = stage_augment(stages, result);
            if (through == Stage::kAugment) return finish(result, code);

            if (int c = stage_generate(stages, result); c != kExitOk) return finish(result, c);
            if (through == Stage::kGenerate) return finish(result, code);

            stage_score(stages, result);
            if (through == Stage::kScore) return finish(result, code);

            if (int c = stage_bias(stages, result); c != kExitOk) return finish(result, c);
            if (through == Stage::kBias) return finish(result, code);

            stage_search(stages, result);
            if (through == Stage::kSearch) return finish(result, code);

            stage_report(stages, result);
            return finish(result, code);
        } catch (const ConfigError& e) {
            result.messages.push_back(e.what());
            result.exit_code = kExitConfigError;
            return result;
        } catch (const Error& e) {
            result.messages.push_back(e.what());
            result.exit_code = kExitConfigError;
            return result;
        }
    }

    PipelineResult simulate() {
        PipelineResult result;
        try {
            if (!cfg_.simulate)
                throw ConfigError("config has no 'simulate' section");
            const sim::SimSpec& spec = *cfg_.simulate;
            const PromptSet prompts = sim::make_prompts(spec);
            const ScoreSet scores = sim::build_fixture(spec, prompts);
            io::write_prompts(cfg_.sim_prompts_out, prompts);
            io::write_scores(cfg_.sim_scores_out, scores);
            log_ << "[simulate] wrote " << prompts.size() << " prompts, " << scores.size()
                 << " scores\n";
        } catch (const Error& e) {
            result.messages.push_back(e.what());
            result.exit_code = kExitConfigError;
        }
        return result;
    }

    // Schema checks, subgroup overlap, and dry-run cost estimates; never
    // throws. Failures set exit code 1.
    PipelineResult validate(json* diagnostics_out = nullptr) {
        PipelineResult result;
        json diag;
        diag["failures"] = json::array();
        diag["warnings"] = json::array();

        auto fail = [&](const std::string& msg) { diag["failures"].push_back(msg); };
        auto warn = [&](const std::string& msg) { diag["warnings"].push_back(msg); };

        if (cfg_.metrics.empty()) fail("no metrics configured");
        if (cfg_.assessed_models.empty()) fail("assessed-model roster is empty");
        if (cfg_.generation.seeds.empty()) fail("no seeds configured");
        if (cfg_.k_lo < 1 || cfg_.k_lo > cfg_.k_hi)
            fail("k_range invalid: [" + std::to_string(cfg_.k_lo) + ", " +
                 std::to_string(cfg_.k_hi) + "]");
        for (const auto& a : cfg_.augmenters) {
            try {
                a.validate();
            } catch (const Error& e) {
                fail(e.what());
            }
        }

        // prompts files and per-metric subgroup inventory
        std::map<MetricId, std::set<std::string>> raw_subgroups;
        std::map<MetricId, std::set<std::string>> canon_subgroups;
        std::map<MetricId, std::set<VariantId>> variants;
        std::optional<UnificationMap> unify;
        if (cfg_.unification_file) {
            if (!fs::exists(*cfg_.unification_file)) {
                fail("unification map not found: " + cfg_.unification_file->string());
            } else {
                unify = io::read_unification_map(*cfg_.unification_file);
            }
        }
        if (cfg_.scores_file && !fs::exists(*cfg_.scores_file))
            fail("scores file not found: " + cfg_.scores_file->string());

        for (const MetricConfig& m : cfg_.metrics) {
            if (m.prompts_file.empty()) {
                fail("metric '" + m.name + "' has no prompts_file");
                continue;
            }
            if (!fs::exists(m.prompts_file)) {
                fail("prompts file not found: " + m.prompts_file.string());
                continue;
            }
            try {
                const PromptSet prompts = io::read_prompts(m.prompts_file);
                for (const PromptRecord& p : prompts.records()) {
                    if (p.metric != m.name || p.dimension != m.dimension) continue;
                    raw_subgroups[m.name].insert(p.subgroup);
                    variants[m.name].insert(p.variant);
                    if (unify) {
                        if (auto c = unify->canonical(p.metric, p.subgroup))
                            canon_subgroups[m.name].insert(*c);
                    }
                }
                if (raw_subgroups[m.name].empty())
                    fail("metric '" + m.name + "': no prompts in " + m.prompts_file.string());
            } catch (const Error& e) {
                fail(e.what());
            }
        }

        // pairwise subgroup overlap (Fig-9-style failure warning)
        json overlaps = json::object();
        for (const auto& [a, b] : metric_pairs()) {
            const auto& sa = unify ? canon_subgroups[a.name] : raw_subgroups[a.name];
            const auto& sb = unify ? canon_subgroups[b.name] : raw_subgroups[b.name];
            std::vector<std::string> shared;
            std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                                  std::back_inserter(shared));
            overlaps[detail::pair_slug(a.name, b.name, a.dimension)] = shared;
            if (!sa.empty() && !sb.empty() && shared.empty())
                warn("metrics '" + a.name + "' and '" + b.name +
                     "' target disjoint subgroups; expect low cross-metric correlation unless a "
                     "unification map aligns them");
        }
        diag["subgroup_overlap"] = overlaps;

        // dry-run cost: combinations per k and pair counts
        std::size_t n_variants = 0;
        if (!variants.empty()) {
            n_variants = SIZE_MAX;
            for (const auto& [name, vs] : variants) {
                std::size_t augmented = 0;
                for (const VariantId& v : vs)
                    if (!v.is_original()) ++augmented;
                n_variants = std::min(n_variants, augmented);
            }
        } else {
            for (const auto& a : cfg_.augmenters)
                n_variants += static_cast<std::size_t>(a.paraphrases_per_prompt);
        }
        json combos = json::object();
        if (n_variants != SIZE_MAX) {
            const std::size_t hi = std::min(cfg_.k_hi, n_variants + 1);
            for (std::size_t k = std::min(cfg_.k_lo, hi); k <= hi; ++k) {
                const std::uint64_t per_metric = search::binomial(n_variants, k - 1);
                combos[std::to_string(k)] = {{"combinations_per_metric", per_metric},
                                             {"pairs", per_metric * per_metric}};
            }
        }
        diag["augmented_variants"] = n_variants == SIZE_MAX ? 0 : n_variants;
        diag["combination_counts"] = combos;
        diag["config_digest"] = cfg_.digest();

        for (const auto& f : diag["failures"]) result.messages.push_back(f.get<std::string>());
        result.exit_code = diag["failures"].empty() ? kExitOk : kExitConfigError;
        log_ << "[validate] " << diag["failures"].size() << " failure(s), "
             << diag["warnings"].size() << " warning(s)\n";
        if (diagnostics_out) *diagnostics_out = std::move(diag);
        return result;
    }

  private:
    PipelineResult finish(PipelineResult& result, int code) {
        if (code != kExitOk && result.exit_code == kExitOk) result.exit_code = code;
        return result;
    }

    std::string prompts_input_digest() const {
        std::string acc;
        for (const MetricConfig& m : cfg_.metrics) {
            acc += m.name + "\x1f" + m.dimension + "\x1f";
            if (m.prompts_file.empty() || !fs::exists(m.prompts_file))
                throw ConfigError("prompts file not found for metric '" + m.name + "': " +
                                  m.prompts_file.string());
            acc += fsutil::read_file(m.prompts_file);
            acc += '\x1e';
        }
        return hashing::content_key(acc);
    }

    // --- augment -------------------------------------------------------------

    int stage_augment(const StageCache& stages, PipelineResult& result) {
        const std::string digest = hashing::content_key(
            prompts_input_digest() + cfg_.section_dump("augmenters"));
        stages.run("augment", digest, {prompts_path(), augment_manifest_path()}, [&]() -> bool {
            PromptSet combined;
            PromptSet originals;
            for (const MetricConfig& m : cfg_.metrics) {
                const PromptSet file_prompts = io::read_prompts(m.prompts_file);
                for (const PromptRecord& p : file_prompts.records()) {
                    if (p.metric != m.name || p.dimension != m.dimension) continue;
                    combined.add(p);
                    if (p.variant.is_original()) originals.add(p);
                }
            }
            if (originals.empty()) throw ConfigError("no original prompts found in inputs");

            json manifest;
            json gaps = json::array();
            if (!cfg_.augmenters.empty()) {
                DiskCache cache(out("cache/augment"));
                augment::AugmentOptions opts;
                opts.concurrency = cfg_.concurrency;
                opts.trace = trace_;
                const auto augmented = augment::augment_prompt_set(originals, cfg_.augmenters,
                                                                   transport_, &cache, opts);
                for (const PromptRecord& rec : augmented.records) combined.add(rec);
                for (const auto& gap : augmented.gaps)
                    gaps.push_back({{"prompt_id", gap.prompt_id},
                                    {"augmenter", gap.augmenter},
                                    {"index", gap.index},
                                    {"reason", gap.reason}});
                manifest = json{{"augmenters", augmented.manifest}, {"gaps", gaps}};
            } else {
                manifest = json{{"augmenters", json::array()}, {"gaps", gaps}};
            }
            io::write_prompts(prompts_path(), combined);
            fsutil::write_file_atomic(augment_manifest_path(), manifest.dump(2));
            return gaps.empty();
        });

        // gaps persist across reruns until the missing paraphrases materialize
        const json recorded = json::parse(fsutil::read_file(augment_manifest_path()));
        if (!recorded.value("gaps", json::array()).empty()) {
            result.messages.push_back("augmentation incomplete; see " +
                                      augment_manifest_path().string());
            return kExitPartial;
        }
        return kExitOk;
    }

    // --- generate -------------------------------------------------------------

    int stage_generate(const StageCache& stages, PipelineResult& result) {
        if (cfg_.scores_file) {
            log_ << "[generate] skipped (pre-scored file route)\n";
            return kExitOk;
        }
        if (cfg_.assessed_models.empty()) throw ConfigError("assessed-model roster is empty");
        const std::string digest = hashing::content_key(
            fsutil::read_file(prompts_path()) + cfg_.section_dump("assessed_models") +
            cfg_.section_dump("generation") + cfg_.section_dump("seeds"));

        bool partial = false;
        stages.run("generate", digest, {generated_path()}, [&]() -> bool {
            const PromptSet prompts = io::read_prompts(prompts_path());
            std::vector<const PromptRecord*> refs;
            for (const PromptRecord& p : prompts.records()) refs.push_back(&p);

            DiskCache cache(out("cache/generate"));
            score::EndpointOptions opts;
            opts.concurrency = cfg_.concurrency;
            opts.trace = trace_;

            std::string lines;
            json gaps = json::array();
            for (const score::ModelEndpoint& endpoint : cfg_.assessed_models) {
                const auto generated = score::generate_continuations(
                    refs, endpoint, cfg_.generation, transport_, &cache, opts);
                for (const auto& g : generated.items) {
                    lines += json{{"prompt_id", g.prompt_id},
                                  {"model", endpoint.name},
                                  {"seed", g.seed},
                                  {"continuation", g.continuation}}
                                 .dump();
                    lines += '\n';
                }
                for (const auto& gap : generated.gaps)
                    gaps.push_back({{"prompt_id", gap.prompt_id},
                                    {"model", endpoint.name},
                                    {"seed", gap.seed},
                                    {"reason", gap.reason}});
            }
            fsutil::write_file_atomic(generated_path(), lines);
            std::error_code ec;
            fs::remove(gaps_path("generate"), ec);
            if (!gaps.empty()) {
                fsutil::write_file_atomic(gaps_path("generate"),
                                          json{{"stage", "generate"}, {"gaps", gaps}}.dump(2));
                partial = true;
            }
            return !partial;
        });
        if (partial) {
            result.messages.push_back("generation incomplete; gap manifest at " +
                                      gaps_path("generate").string());
            return kExitPartial;
        }
        return kExitOk;
    }

    // --- score ------------------------------------------------------------------

    void stage_score(const StageCache& stages, PipelineResult&) {
        std::string digest;
        if (cfg_.scores_file) {
            digest = hashing::content_key("ingest" + fsutil::read_file(*cfg_.scores_file));
        } else {
            digest = hashing::content_key("endpoint" + fsutil::read_file(generated_path()) +
                                          cfg_.section_dump("score_channel"));
        }
        stages.run("score", digest, {scores_path()}, [&] {
            if (cfg_.scores_file) {
                const ScoreSet scores = io::ingest_scores(*cfg_.scores_file);
                io::write_scores(scores_path(), scores);
                return;
            }
            std::vector<score::ScoreItem> items;
            io::detail::for_each_line(generated_path(), [&](std::size_t line_no,
                                                            std::string_view line) {
                json j;
                try {
                    j = json::parse(line);
                } catch (const json::exception& e) {
                    throw SchemaError(generated_path().string(), line_no, e.what());
                }
                items.push_back({j.at("prompt_id").get<std::string>(),
                                 j.at("model").get<std::string>(), j.at("seed").get<int>(),
                                 j.at("continuation").get<std::string>()});
            });
            DiskCache cache(out("cache/score"));
            score::EndpointOptions opts;
            opts.concurrency = cfg_.concurrency;
            opts.trace = trace_;
            const auto scored =
                score::score_continuations(items, cfg_.score_channel, transport_, &cache, opts);
            ScoreSet set;
            for (const auto& s : scored) set.add(s);
            io::write_scores(scores_path(), set);
        });
    }

    // --- bias ---------------------------------------------------------------------

    int stage_bias(const StageCache& stages, PipelineResult& result) {
        std::string unify_bytes = "none";
        if (cfg_.unification_file) unify_bytes = fsutil::read_file(*cfg_.unification_file);
        const std::string digest = hashing::content_key(
            fsutil::read_file(scores_path()) + fsutil::read_file(prompts_path()) + unify_bytes +
            (cfg_.normalize_bias_by_subgroups ? "norm" : "sum") +
            json(cfg_.roster()).dump());

        bool aborted = false;
        stages.run("bias", digest, {bias_path()}, [&] {
            const PromptSet prompts = io::read_prompts(prompts_path());
            const ScoreSet scores = io::ingest_scores(scores_path());
            const auto roster = cfg_.roster();

            const auto gaps = find_score_gaps(scores, prompts, roster, cfg_.generation.seeds);
            if (!gaps.empty()) {
                json gap_json = json::array();
                for (std::size_t i = 0; i < gaps.size(); ++i)
                    gap_json.push_back({{"prompt_id", gaps[i].prompt_id},
                                        {"model", gaps[i].model},
                                        {"seed", gaps[i].seed}});
                fsutil::write_file_atomic(gaps_path(),
                                          json{{"stage", "bias"}, {"gaps", gap_json}}.dump(2));
                aborted = true;
                return;
            }

            std::optional<UnificationMap> unify;
            if (cfg_.unification_file) unify = io::read_unification_map(*cfg_.unification_file);
            BiasOptions opts;
            opts.normalize_by_subgroups = cfg_.normalize_bias_by_subgroups;
            opts.unification = unify ? &*unify : nullptr;

            WarningSink warnings;
            json metrics = json::object();
            for (const MetricConfig& m : cfg_.metrics) {
                BiasAggregator agg(scores, prompts, m.name, m.dimension, opts);
                json variants = json::object();
                for (const auto& [variant, vec] : agg.all_variant_vectors(roster, &warnings))
                    variants[variant.str()] = vec.values;
                metrics[m.name] = {{"dimension", m.dimension}, {"variants", variants}};
            }
            fsutil::write_file_atomic(bias_path(), json{{"config_digest", cfg_.digest()},
                                                        {"roster", roster},
                                                        {"metrics", metrics},
                                                        {"warnings", warnings.entries}}
                                                       .dump(2));
        });
        if (aborted) {
            result.messages.push_back("scores incomplete; gap manifest at " + gaps_path().string());
            return kExitPartial;
        }
        return kExitOk;
    }

    search::MetricVariantData load_metric_data(const json& bias_doc, const MetricId& name) const {
        const auto& entry = bias_doc.at("metrics").at(name);
        std::map<VariantId, BiasVector> vectors;
        for (const auto& [vstr, values] : entry.at("variants").items()) {
            BiasVector vec;
            vec.metric = name;
            vec.dimension = entry.at("dimension").get<std::string>();
            vec.source = vstr;
            vec.roster = bias_doc.at("roster").get<std::vector<AssessedModelId>>();
            vec.values = values.get<std::vector<double>>();
            vectors.emplace(VariantId::parse(vstr), std::move(vec));
        }
        return search::MetricVariantData::from_bias_vectors(vectors);
    }

    // --- search -----------------------------------------------------------------

    void stage_search(const StageCache& stages, PipelineResult&) {
        const auto pairs = metric_pairs();
        if (pairs.empty()) {
            log_ << "[search] skipped: no metric pair shares a dimension\n";
            return;
        }
        std::string digest_src = fsutil::read_file(bias_path()) + std::to_string(cfg_.k_lo) + ":" +
                                 std::to_string(cfg_.k_hi) +
                                 (cfg_.pooled_combination_bias ? "pooled" : "mean");
        if (cfg_.pooled_combination_bias) digest_src += fsutil::read_file(scores_path());
        const std::string digest = hashing::content_key(digest_src);

        std::vector<fs::path> outputs;
        for (const auto& [a, b] : pairs) outputs.push_back(selection_path(a.name, b.name, a.dimension));

        stages.run("search", digest, outputs, [&] {
            const json bias_doc = json::parse(fsutil::read_file(bias_path()));

            // pooled mode recomputes aggregation from the persisted scores
            std::optional<PromptSet> prompts;
            std::optional<ScoreSet> scores;
            std::optional<UnificationMap> unify;
            std::map<MetricId, BiasAggregator> aggs;
            if (cfg_.pooled_combination_bias) {
                prompts.emplace(io::read_prompts(prompts_path()));
                scores.emplace(io::ingest_scores(scores_path()));
                if (cfg_.unification_file) unify = io::read_unification_map(*cfg_.unification_file);
                BiasOptions opts;
                opts.normalize_by_subgroups = cfg_.normalize_bias_by_subgroups;
                opts.unification = unify ? &*unify : nullptr;
                for (const MetricConfig& m : cfg_.metrics)
                    aggs.emplace(m.name,
                                 BiasAggregator(*scores, *prompts, m.name, m.dimension, opts));
            }

            for (const auto& [a, b] : pairs) {
                const auto data_a = load_metric_data(bias_doc, a.name);
                const auto data_b = load_metric_data(bias_doc, b.name);
                const std::size_t max_k =
                    1 + std::min(data_a.augmented.size(), data_b.augmented.size());
                const std::size_t hi = std::min(cfg_.k_hi, max_k);
                if (cfg_.k_lo > hi) throw SizeOutOfRange(cfg_.k_lo, hi);
                if (hi < cfg_.k_hi)
                    log_ << "[search] k_hi clamped to " << hi << " for "
                         << detail::pair_slug(a.name, b.name, a.dimension) << "\n";

                search::SweepOptions opts;
                opts.jobs = static_cast<unsigned>(cfg_.concurrency);
                opts.pooled = cfg_.pooled_combination_bias;
                if (opts.pooled) {
                    opts.aggregator_a = &aggs.at(a.name);
                    opts.aggregator_b = &aggs.at(b.name);
                }
                const auto sweep = search::sweep_sizes(data_a, data_b, cfg_.k_lo, hi, opts);

                json sweep_json = json::array();
                for (const auto& r : sweep) {
                    json members_a = json::array(), members_b = json::array();
                    for (const auto& v : r.combo_a.members(data_a.augmented))
                        members_a.push_back(v.str());
                    for (const auto& v : r.combo_b.members(data_b.augmented))
                        members_b.push_back(v.str());
                    json excluded_a = json::array(), excluded_b = json::array();
                    for (std::size_t i = 0; i < r.excluded_a.size() && i < 50; ++i)
                        excluded_a.push_back(r.excluded_a[i].label(data_a.augmented));
                    for (std::size_t i = 0; i < r.excluded_b.size() && i < 50; ++i)
                        excluded_b.push_back(r.excluded_b[i].label(data_b.augmented));
                    sweep_json.push_back({{"k", r.k},
                                          {"combo_a", members_a},
                                          {"combo_b", members_b},
                                          {"r", r.correlation.r},
                                          {"p_value", r.correlation.p_value},
                                          {"n", r.correlation.n},
                                          {"baseline_mean_r", r.baseline_mean_r},
                                          {"pairs_evaluated", r.pairs_evaluated},
                                          {"excluded_a_count", r.excluded_a.size()},
                                          {"excluded_b_count", r.excluded_b.size()},
                                          {"excluded_a", excluded_a},
                                          {"excluded_b", excluded_b}});
                }
                fsutil::write_file_atomic(selection_path(a.name, b.name, a.dimension),
                                          json{{"config_digest", cfg_.digest()},
                                               {"metric_a", a.name},
                                               {"metric_b", b.name},
                                               {"dimension", a.dimension},
                                               {"k_range", {cfg_.k_lo, hi}},
                                               {"sweep", sweep_json}}
                                              .dump(2));
            }
        });
    }

    // --- report ----------------------------------------------------------------

    void stage_report(const StageCache& stages, PipelineResult&) {
        const auto pairs = metric_pairs();
        if (pairs.empty()) {
            log_ << "[report] skipped: nothing to report\n";
            return;
        }
        std::string digest_src = fsutil::read_file(bias_path()) + std::to_string(cfg_.top_n);
        for (const auto& [a, b] : pairs)
            digest_src += fsutil::read_file(selection_path(a.name, b.name, a.dimension));
        const std::string digest = hashing::content_key(digest_src);

        std::vector<fs::path> outputs;
        for (const auto& [a, b] : pairs) {
            const std::string slug = detail::pair_slug(a.name, b.name, a.dimension);
            for (const char* table : {"sweep", "contributions", "ranking"})
                for (const char* ext : {".csv", ".json"})
                    outputs.push_back(report_dir() / (slug + "_" + table + ext));
        }
        outputs.push_back(report_dir() / "run_report.json");

        stages.run("report", digest, outputs, [&] {
            const json bias_doc = json::parse(fsutil::read_file(bias_path()));
            fs::create_directories(report_dir());
            json inventory = json::array();

            for (const auto& [a, b] : pairs) {
                const std::string slug = detail::pair_slug(a.name, b.name, a.dimension);
                const json sel = json::parse(
                    fsutil::read_file(selection_path(a.name, b.name, a.dimension)));

                // sweep table
                report::Table sweep;
                sweep.columns = {"k", "selected_r", "selected_p", "baseline_mean_r"};
                for (const auto& row : sel.at("sweep"))
                    sweep.rows.push_back({static_cast<std::int64_t>(row.at("k").get<std::size_t>()),
                                          row.at("r").get<double>(),
                                          row.at("p_value").get<double>(),
                                          row.at("baseline_mean_r").get<double>()});
                write_table(slug + "_sweep", sweep, inventory);

                // contributions table per k
                std::map<std::size_t, std::map<std::string, double>> per_k;
                for (const auto& row : sel.at("sweep")) {
                    const std::size_t k = row.at("k").get<std::size_t>();
                    std::map<std::string, double> counts;
                    double total = 0;
                    for (const char* side : {"combo_a", "combo_b"}) {
                        for (const auto& member : row.at(side)) {
                            const VariantId v = VariantId::parse(member.get<std::string>());
                            if (v.is_original()) continue;
                            counts[v.augmenter] += 1.0;
                            total += 1.0;
                        }
                    }
                    if (total > 0)
                        for (auto& [name, c] : counts) c /= total;
                    per_k[k] = std::move(counts);
                }
                write_table(slug + "_contributions", report::contribution_table(per_k), inventory);

                // ranking before/after; "after" uses the k with the highest r
                const auto data_a = load_metric_data(bias_doc, a.name);
                const auto data_b = load_metric_data(bias_doc, b.name);
                const json* best_row = nullptr;
                for (const auto& row : sel.at("sweep"))
                    if (!best_row || row.at("r").get<double>() > best_row->at("r").get<double>())
                        best_row = &row;

                const auto combo_vector = [&](const search::MetricVariantData& data,
                                              const json& members) {
                    std::vector<double> acc = data.original_values;
                    std::size_t count = 1;
                    for (const auto& member : members) {
                        const VariantId v = VariantId::parse(member.get<std::string>());
                        if (v.is_original()) continue;
                        const auto it =
                            std::find(data.augmented.begin(), data.augmented.end(), v);
                        const std::size_t idx =
                            static_cast<std::size_t>(it - data.augmented.begin());
                        for (std::size_t i = 0; i < acc.size(); ++i)
                            acc[i] += data.augmented_values[idx][i];
                        ++count;
                    }
                    for (double& v : acc) v /= static_cast<double>(count);
                    return acc;
                };

                BiasVector before_a, before_b, after_a, after_b;
                before_a.metric = a.name;
                before_a.dimension = a.dimension;
                before_a.source = "original";
                before_a.roster = data_a.roster;
                before_a.values = data_a.original_values;
                before_b = before_a;
                before_b.metric = b.name;
                before_b.values = data_b.original_values;
                after_a = before_a;
                after_a.source = "selected";
                after_a.values = combo_vector(data_a, best_row->at("combo_a"));
                after_b = before_b;
                after_b.source = "selected";
                after_b.values = combo_vector(data_b, best_row->at("combo_b"));

                WarningSink warnings;
                const auto ranking =
                    report::ranking_table(before_a, before_b, after_a, after_b, cfg_.top_n,
                                          &warnings);
                report::Table ranking_with_summary = ranking.table;
                for (const auto& w : warnings.entries) ranking_with_summary.notes.push_back(w);
                ranking_with_summary.notes.push_back(
                    "agreement: " + ranking.summary().dump() +
                    " (after = best k " + std::to_string(best_row->at("k").get<std::size_t>()) + ")");
                write_table(slug + "_ranking", ranking_with_summary, inventory);
            }

            // machine-readable run summary; content is a pure function of inputs
            json gap_summary = json::object();
            if (fs::exists(gaps_path())) gap_summary = json::parse(fsutil::read_file(gaps_path()));
            json augment_summary = json::object();
            if (fs::exists(augment_manifest_path()))
                augment_summary = json::parse(fsutil::read_file(augment_manifest_path()));
            fsutil::write_file_atomic(report_dir() / "run_report.json",
                                      json{{"config_digest", cfg_.digest()},
                                           {"bias_warnings", bias_doc.value("warnings", json::array())},
                                           {"augment", augment_summary},
                                           {"gaps", gap_summary},
                                           {"tables", inventory}}
                                          .dump(2));
        });
    }

    void write_table(const std::string& name, const report::Table& table, json& inventory) const {
        fsutil::write_file_atomic(report_dir() / (name + ".csv"), table.to_csv());
        fsutil::write_file_atomic(report_dir() / (name + ".json"), table.to_json().dump(2));
        inventory.push_back(name);
    }

    RunConfig cfg_;
    http::Transport& transport_;
    std::ostream& log_;
    std::ostream* trace_;
};

// --- subcommand surface ---------------------------------------------------------

inline int cmd_augment(const RunConfig& cfg, http::Transport& transport, std::ostream& log,
                       std::ostream* trace = nullptr) {
    Runner runner(cfg, transport, log, trace);
    const auto result = runner.run(Stage::kAugment);
    for (const auto& m : result.messages) log << m << "\n";
    return result.exit_code;
}

inline int cmd_run(const RunConfig& cfg, http::Transport& transport, std::ostream& log,
                   Stage through = Stage::kReport, std::ostream* trace = nullptr) {
    Runner runner(cfg, transport, log, trace);
    const auto result = runner.run(through);
    for (const auto& m : result.messages) log << m << "\n";
    return result.exit_code;
}

inline int cmd_validate(const RunConfig& cfg, std::ostream& log, json* diagnostics = nullptr) {
    http::MockTransport noop([](const std::string&, const std::string&) -> http::Response {
        return {500, "", "validate issues no requests"};
    });
    Runner runner(cfg, noop, log);
    const auto result = runner.validate(diagnostics);
    for (const auto& m : result.messages) log << m << "\n";
    return result.exit_code;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    http::MockTransport noop([](const std::string&, const std::string&) -> http::Response {
        return {500, "", "simulate issues no requests"};
    });
    Runner runner(cfg, noop, log);
    const auto result = runner.simulate();
    for (const auto& m : result.messages) log << m << "\n";
    return result.exit_code;
}

}  // namespace corrfair::pipeline
