#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "corrfair/errors.hpp"

namespace corrfair {

using MetricId = std::string;
using BiasDimension = std::string;
using AssessedModelId = std::string;

// Provenance of one prompt variant: the metric's own prompt set, or the
// index-th paraphrase produced by a named augmenter model.
struct VariantId {
    std::string augmenter;  // empty means original
    int index = 0;          // >= 1 for paraphrases

    bool is_original() const { return augmenter.empty(); }

    static VariantId original() { return {}; }
    static VariantId paraphrase(std::string augmenter_name, int idx) {
        if (augmenter_name.empty()) throw Error("paraphrase variant needs an augmenter name");
        if (idx < 1) throw Error("paraphrase index must be >= 1");
        return {std::move(augmenter_name), idx};
    }

    std::string str() const {
        if (is_original()) return "original";
        return augmenter + "#" + std::to_string(index);
    }

    static VariantId parse(const std::string& s) {
        if (s == "original") return original();
        const auto pos = s.rfind('#');
        if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
            throw Error("bad variant id: '" + s + "'");
        return paraphrase(s.substr(0, pos), std::stoi(s.substr(pos + 1)));
    }

    auto operator<=>(const VariantId&) const = default;
};

// One prompt, tagged with its place in the evaluation grid.
struct PromptRecord {
    std::string id;
    MetricId metric;
    BiasDimension dimension;
    std::string subgroup;
    VariantId variant;
    std::string text;
    std::string parent_id;  // empty iff variant is original
    nlohmann::json extra;   // unknown JSONL fields, preserved on round-trip

    void validate() const {
        if (id.empty()) throw Error("prompt id empty");
        if (metric.empty()) throw Error("prompt '" + id + "': metric empty");
        if (dimension.empty()) throw Error("prompt '" + id + "': dimension empty");
        if (subgroup.empty()) throw Error("prompt '" + id + "': subgroup empty");
        if (text.empty()) throw Error("prompt '" + id + "': text empty");
        if (variant.is_original() != parent_id.empty())
            throw Error("prompt '" + id + "': parent_id present iff variant is a paraphrase");
    }
};

// One scored model continuation.
struct ScoredContinuation {
    std::string prompt_id;
    AssessedModelId model;
    int seed = 0;
    std::string continuation;
    double toxicity = 0.0;
    nlohmann::json extra;

    void validate() const {
        if (prompt_id.empty()) throw Error("score record: prompt_id empty");
        if (model.empty()) throw Error("score record: model empty");
        if (seed < 0) throw Error("score record: seed must be >= 0");
        if (!(toxicity >= 0.0 && toxicity <= 1.0)) throw ScoreOutOfRange(toxicity);
    }
};

// Bias scores across the assessed-model roster for one variant/combination.
struct BiasVector {
    MetricId metric;
    BiasDimension dimension;
    std::string source;  // variant string or combination label
    std::vector<AssessedModelId> roster;
    std::vector<double> values;  // parallel to roster

    void validate() const {
        if (roster.size() != values.size())
            throw MismatchedRoster("bias vector roster/value size mismatch");
        for (double v : values)
            if (!(v >= 0.0)) throw Error("bias value must be >= 0");
    }
};

// Optional cross-metric subgroup unification: raw labels are mapped onto a
// shared canonical set; unmapped labels are dropped from bias computation.
struct UnificationMap {
    std::map<MetricId, std::map<std::string, std::string>> by_metric;

    bool has(const MetricId& metric) const { return by_metric.count(metric) > 0; }

    std::optional<std::string> canonical(const MetricId& metric, const std::string& raw) const {
        auto mit = by_metric.find(metric);
        if (mit == by_metric.end()) return raw;  // metric not covered: keep raw labels
        auto sit = mit->second.find(raw);
        if (sit == mit->second.end()) return std::nullopt;  // dropped
        return sit->second;
    }
};

// Prompt collection with id lookup and per-(metric, dimension) grouping.
class PromptSet {
  public:
    void add(PromptRecord rec) {
        rec.validate();
        if (by_id_.count(rec.id)) throw DuplicateKey("prompt id '" + rec.id + "'");
        if (!rec.parent_id.empty()) {
            auto it = by_id_.find(rec.parent_id);
            if (it != by_id_.end()) {
                const PromptRecord& parent = records_[it->second];
                if (parent.metric != rec.metric || parent.dimension != rec.dimension ||
                    parent.subgroup != rec.subgroup)
                    throw Error("prompt '" + rec.id + "' does not share (metric, dimension, subgroup) with parent");
            }
        }
        by_id_.emplace(rec.id, records_.size());
        records_.push_back(std::move(rec));
    }

    const PromptRecord* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &records_[it->second];
    }

    const PromptRecord& at(const std::string& id) const {
        const PromptRecord* p = find(id);
        if (!p) throw UnknownId("prompt", id);
        return *p;
    }

    const std::vector<PromptRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    std::vector<const PromptRecord*> select(const MetricId& metric, const BiasDimension& dim) const {
        std::vector<const PromptRecord*> out;
        for (const auto& r : records_)
            if (r.metric == metric && r.dimension == dim) out.push_back(&r);
        return out;
    }

    // Distinct variants for a metric/dimension, original first, then
    // paraphrases ordered by (augmenter, index).
    std::vector<VariantId> variants(const MetricId& metric, const BiasDimension& dim) const {
        std::set<VariantId> seen;
        for (const auto& r : records_)
            if (r.metric == metric && r.dimension == dim) seen.insert(r.variant);
        std::vector<VariantId> out(seen.begin(), seen.end());
        return out;  // VariantId ordering puts the original (empty augmenter) first
    }

    std::vector<std::string> subgroups(const MetricId& metric, const BiasDimension& dim) const {
        std::set<std::string> seen;
        for (const auto& r : records_)
            if (r.metric == metric && r.dimension == dim) seen.insert(r.subgroup);
        return {seen.begin(), seen.end()};
    }

  private:
    std::vector<PromptRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// Immutable-once-frozen score collection keyed by (prompt_id, model, seed).
class ScoreSet {
  public:
    void add(ScoredContinuation rec) {
        rec.validate();
        const std::string key = make_key(rec.prompt_id, rec.model, rec.seed);
        if (index_.count(key)) throw DuplicateKey("(" + key + ")");
        index_.emplace(key, records_.size());
        records_.push_back(std::move(rec));
    }

    const ScoredContinuation* find(const std::string& prompt_id, const AssessedModelId& model,
                                   int seed) const {
        auto it = index_.find(make_key(prompt_id, model, seed));
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    const std::vector<ScoredContinuation>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

  private:
    static std::string make_key(const std::string& prompt_id, const std::string& model, int seed) {
        return prompt_id + "\x1f" + model + "\x1f" + std::to_string(seed);
    }
    std::vector<ScoredContinuation> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace corrfair
