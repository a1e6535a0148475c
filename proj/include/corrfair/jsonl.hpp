#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "corrfair/fsutil.hpp"
#include "corrfair/model.hpp"

namespace corrfair::io {

using nlohmann::json;

inline json variant_to_json(const VariantId& v) {
    if (v.is_original()) return json{{"source", "original"}};
    return json{{"source", "augmented"}, {"augmenter", v.augmenter}, {"index", v.index}};
}

inline VariantId variant_from_json(const json& j) {
    const std::string source = j.at("source").get<std::string>();
    if (source == "original") return VariantId::original();
    if (source != "augmented") throw Error("variant source must be 'original' or 'augmented'");
    return VariantId::paraphrase(j.at("augmenter").get<std::string>(), j.at("index").get<int>());
}

inline json prompt_to_json(const PromptRecord& p) {
    json j = p.extra.is_object() ? p.extra : json::object();
    j["id"] = p.id;
    j["metric"] = p.metric;
    j["dimension"] = p.dimension;
    j["subgroup"] = p.subgroup;
    j["variant"] = variant_to_json(p.variant);
    j["text"] = p.text;
    if (!p.parent_id.empty()) j["parent_id"] = p.parent_id;
    return j;
}

inline PromptRecord prompt_from_json(json j) {
    PromptRecord p;
    p.id = j.at("id").get<std::string>();
    p.metric = j.at("metric").get<std::string>();
    p.dimension = j.at("dimension").get<std::string>();
    p.subgroup = j.at("subgroup").get<std::string>();
    p.variant = variant_from_json(j.at("variant"));
    p.text = j.at("text").get<std::string>();
    if (j.contains("parent_id")) p.parent_id = j.at("parent_id").get<std::string>();
    for (const char* k : {"id", "metric", "dimension", "subgroup", "variant", "text", "parent_id"})
        j.erase(k);
    if (!j.empty()) p.extra = std::move(j);
    p.validate();
    return p;
}

inline json score_to_json(const ScoredContinuation& s) {
    json j = s.extra.is_object() ? s.extra : json::object();
    j["prompt_id"] = s.prompt_id;
    j["model"] = s.model;
    j["seed"] = s.seed;
    j["continuation"] = s.continuation;
    j["toxicity"] = s.toxicity;
    return j;
}

inline ScoredContinuation score_from_json(json j) {
    ScoredContinuation s;
    s.prompt_id = j.at("prompt_id").get<std::string>();
    s.model = j.at("model").get<std::string>();
    s.seed = j.at("seed").get<int>();
    s.continuation = j.at("continuation").get<std::string>();
    s.toxicity = j.at("toxicity").get<double>();
    for (const char* k : {"prompt_id", "model", "seed", "continuation", "toxicity"}) j.erase(k);
    if (!j.empty()) s.extra = std::move(j);
    s.validate();
    return s;
}

namespace detail {

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    const std::string content = fsutil::read_file(path);
    std::size_t line_no = 0;
    std::size_t begin = 0;
    while (begin < content.size()) {
        std::size_t end = content.find('\n', begin);
        if (end == std::string::npos) end = content.size();
        ++line_no;
        const std::string_view line(content.data() + begin, end - begin);
        if (!line.empty()) fn(line_no, line);
        begin = end + 1;
    }
}

}  // namespace detail

inline std::string prompts_to_jsonl(const PromptSet& prompts) {
    std::string out;
    for (const PromptRecord& p : prompts.records()) {
        out += prompt_to_json(p).dump();
        out += '\n';
    }
    return out;
}

inline void write_prompts(const std::filesystem::path& path, const PromptSet& prompts) {
    fsutil::write_file_atomic(path, prompts_to_jsonl(prompts));
}

inline PromptSet read_prompts(const std::filesystem::path& path) {
    PromptSet out;
    detail::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(path.string(), line_no, e.what());
        }
        try {
            out.add(prompt_from_json(std::move(j)));
        } catch (const DuplicateKey&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError(path.string(), line_no, e.what());
        } catch (const json::exception& e) {
            throw SchemaError(path.string(), line_no, e.what());
        }
    });
    return out;
}

inline std::string scores_to_jsonl(const ScoreSet& scores) {
    std::string out;
    for (const ScoredContinuation& s : scores.records()) {
        out += score_to_json(s).dump();
        out += '\n';
    }
    return out;
}

inline void write_scores(const std::filesystem::path& path, const ScoreSet& scores) {
    fsutil::write_file_atomic(path, scores_to_jsonl(scores));
}

// Validated ingest; duplicate (prompt_id, model, seed) keys are rejected and
// malformed lines are reported with their line number.
inline ScoreSet ingest_scores(const std::filesystem::path& path) {
    ScoreSet out;
    detail::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(path.string(), line_no, e.what());
        }
        try {
            out.add(score_from_json(std::move(j)));
        } catch (const DuplicateKey&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError(path.string(), line_no, e.what());
        } catch (const json::exception& e) {
            throw SchemaError(path.string(), line_no, e.what());
        }
    });
    return out;
}

// Subgroup unification map file:
//   { "metrics": { "<metric>": { "<raw label>": "<canonical>", ... }, ... } }
inline UnificationMap read_unification_map(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(fsutil::read_file(path));
    } catch (const json::exception& e) {
        throw SchemaError(path.string(), 0, e.what());
    }
    UnificationMap out;
    if (!j.contains("metrics") || !j["metrics"].is_object())
        throw SchemaError(path.string(), 0, "expected top-level object with a 'metrics' object");
    for (const auto& [metric, mapping] : j["metrics"].items()) {
        if (!mapping.is_object())
            throw SchemaError(path.string(), 0, "metric '" + metric + "' mapping must be an object");
        for (const auto& [raw, canon] : mapping.items()) {
            if (!canon.is_string())
                throw SchemaError(path.string(), 0, "canonical label for '" + raw + "' must be a string");
            out.by_metric[metric][raw] = canon.get<std::string>();
        }
    }
    return out;
}

}  // namespace corrfair::io
