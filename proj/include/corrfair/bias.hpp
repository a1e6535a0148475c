#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "corrfair/model.hpp"
#include "corrfair/stats.hpp"

namespace corrfair {

struct BiasOptions {
    // Divide the deviation sum by |S| (useful when metrics differ in
    // subgroup counts). Default keeps the plain sum.
    bool normalize_by_subgroups = false;
    const UnificationMap* unification = nullptr;
};

namespace detail {

// Streaming mean that reports a constant stream exactly.
struct MeanAcc {
    double sum = 0.0;
    double comp = 0.0;
    std::size_t count = 0;
    double first = 0.0;
    bool uniform = true;

    void add(double x) {
        if (count == 0) {
            first = x;
        } else if (x != first) {
            uniform = false;
        }
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
        ++count;
    }

    void merge(const MeanAcc& o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        uniform = uniform && o.uniform && first == o.first;
        sum += o.sum;
        comp += o.comp;
        count += o.count;
    }

    double mean() const {
        if (uniform) return first;
        return (sum + comp) / static_cast<double>(count);
    }
    bool empty() const { return count == 0; }
};

inline double deviation_sum(std::span<const double> subgroup_means, bool normalize) {
    const double centre = stats::mean(subgroup_means);
    std::vector<double> devs;
    devs.reserve(subgroup_means.size());
    for (double t : subgroup_means) devs.push_back(std::abs(centre - t));
    double total = stats::detail::compensated_sum(devs);
    if (normalize) total /= static_cast<double>(subgroup_means.size());
    return total;
}

}  // namespace detail

// Groups toxicity scores of one (metric, dimension) by variant, effective
// subgroup label, and assessed model. All bias math runs off this table.
class BiasAggregator {
  public:
    BiasAggregator(const ScoreSet& scores, const PromptSet& prompts, MetricId metric,
                   BiasDimension dimension, BiasOptions options = {})
        : metric_(std::move(metric)), dimension_(std::move(dimension)), options_(options) {
        std::set<std::string> labels;
        std::set<VariantId> variants;
        for (const ScoredContinuation& s : scores.records()) {
            const PromptRecord* p = prompts.find(s.prompt_id);
            if (!p) throw UnknownId("prompt referenced by score", s.prompt_id);
            if (p->metric != metric_ || p->dimension != dimension_) continue;
            std::optional<std::string> label = effective_label(*p);
            if (!label) continue;
            labels.insert(*label);
            variants.insert(p->variant);
            cells_[Key{p->variant, *label, s.model}].add(s.toxicity);
        }
        labels_.assign(labels.begin(), labels.end());
        variants_.assign(variants.begin(), variants.end());
    }

    const MetricId& metric() const { return metric_; }
    const BiasDimension& dimension() const { return dimension_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<VariantId>& variants() const { return variants_; }

    double subgroup_mean(const VariantId& variant, const std::string& label,
                         const AssessedModelId& model) const {
        auto it = cells_.find(Key{variant, label, model});
        if (it == cells_.end() || it->second.empty())
            throw EmptySubgroup(label, "variant " + variant.str() + ", model " + model);
        return it->second.mean();
    }

    // Eq-style bias: sum over subgroups of |mean-over-subgroups - subgroup mean|.
    double bias(const VariantId& variant, const AssessedModelId& model,
                WarningSink* warnings = nullptr) const {
        return bias_over(labels_, variant, model, warnings);
    }

    double bias_over(std::span<const std::string> subgroups, const VariantId& variant,
                     const AssessedModelId& model, WarningSink* warnings = nullptr) const {
        if (subgroups.empty()) throw Error("bias needs at least one subgroup");
        if (subgroups.size() == 1 && warnings)
            warnings->warn("single subgroup '" + std::string(subgroups[0]) +
                           "' for metric " + metric_ + "; bias is identically 0");
        std::vector<double> means;
        means.reserve(subgroups.size());
        for (const std::string& s : subgroups) means.push_back(subgroup_mean(variant, s, model));
        return detail::deviation_sum(means, options_.normalize_by_subgroups);
    }

    BiasVector bias_vector(const VariantId& variant, std::span<const AssessedModelId> roster,
                           WarningSink* warnings = nullptr) const {
        require_complete(std::vector<VariantId>{variant}, roster);
        BiasVector out;
        out.metric = metric_;
        out.dimension = dimension_;
        out.source = variant.str();
        out.roster.assign(roster.begin(), roster.end());
        out.values.reserve(roster.size());
        bool first_model = true;
        for (const AssessedModelId& m : roster) {
            out.values.push_back(bias(variant, m, first_model ? warnings : nullptr));
            first_model = false;
        }
        return out;
    }

    std::map<VariantId, BiasVector> all_variant_vectors(std::span<const AssessedModelId> roster,
                                                        WarningSink* warnings = nullptr) const {
        std::map<VariantId, BiasVector> out;
        for (const VariantId& v : variants_) out.emplace(v, bias_vector(v, roster, warnings));
        return out;
    }

    // Combination bias over pooled prompts: subgroup means are taken over the
    // union of all member variants' prompts before the deviation sum.
    BiasVector pooled_combination_vector(std::span<const VariantId> members,
                                         std::span<const AssessedModelId> roster,
                                         const std::string& source_label) const {
        require_complete(std::vector<VariantId>(members.begin(), members.end()), roster);
        BiasVector out;
        out.metric = metric_;
        out.dimension = dimension_;
        out.source = source_label;
        out.roster.assign(roster.begin(), roster.end());
        for (const AssessedModelId& m : roster) {
            std::vector<double> means;
            means.reserve(labels_.size());
            for (const std::string& label : labels_) {
                detail::MeanAcc pooled;
                for (const VariantId& v : members) {
                    auto it = cells_.find(Key{v, label, m});
                    if (it != cells_.end()) pooled.merge(it->second);
                }
                if (pooled.empty())
                    throw EmptySubgroup(label, "pooled combination " + source_label + ", model " + m);
                means.push_back(pooled.mean());
            }
            out.values.push_back(detail::deviation_sum(means, options_.normalize_by_subgroups));
        }
        return out;
    }

  private:
    void require_complete(const std::vector<VariantId>& vs,
                          std::span<const AssessedModelId> roster) const {
        std::vector<std::string> missing;
        for (const AssessedModelId& m : roster)
            for (const VariantId& v : vs)
                for (const std::string& label : labels_)
                    if (!cells_.count(Key{v, label, m}))
                        missing.push_back("(" + m + ", " + label + ", " + v.str() + ")");
        if (!missing.empty()) throw IncompleteScores(std::move(missing));
    }

    std::optional<std::string> effective_label(const PromptRecord& p) const {
        if (!options_.unification) return p.subgroup;
        return options_.unification->canonical(p.metric, p.subgroup);
    }

    using Key = std::tuple<VariantId, std::string, AssessedModelId>;

    MetricId metric_;
    BiasDimension dimension_;
    BiasOptions options_;
    std::map<Key, detail::MeanAcc> cells_;
    std::vector<std::string> labels_;
    std::vector<VariantId> variants_;
};

// --- spec-level convenience wrappers over one-off aggregations --------------

inline double subgroup_mean_toxicity(const ScoreSet& scores, const PromptSet& prompts,
                                     const MetricId& metric, const BiasDimension& dimension,
                                     const std::string& subgroup, const VariantId& variant,
                                     const AssessedModelId& model, const BiasOptions& options = {}) {
    BiasAggregator agg(scores, prompts, metric, dimension, options);
    return agg.subgroup_mean(variant, subgroup, model);
}

inline double bias_score(const ScoreSet& scores, const PromptSet& prompts, const MetricId& metric,
                         const BiasDimension& dimension, const VariantId& variant,
                         const AssessedModelId& model, const BiasOptions& options = {},
                         WarningSink* warnings = nullptr) {
    BiasAggregator agg(scores, prompts, metric, dimension, options);
    return agg.bias(variant, model, warnings);
}

inline BiasVector bias_vector(const ScoreSet& scores, const PromptSet& prompts,
                              const MetricId& metric, const BiasDimension& dimension,
                              const VariantId& variant, std::span<const AssessedModelId> roster,
                              const BiasOptions& options = {}, WarningSink* warnings = nullptr) {
    BiasAggregator agg(scores, prompts, metric, dimension, options);
    return agg.bias_vector(variant, roster, warnings);
}

// Element-wise mean of per-variant bias vectors sharing (metric, dimension,
// roster). The member list must include the original variant's vector.
inline BiasVector combination_bias_vector(std::span<const BiasVector> members) {
    if (members.empty()) throw Error("combination needs at least one member vector");
    const BiasVector& head = members[0];
    bool has_original = false;
    for (const BiasVector& v : members) {
        if (v.metric != head.metric || v.dimension != head.dimension)
            throw MismatchedRoster("combination members differ in metric/dimension");
        if (v.roster != head.roster) throw MismatchedRoster("combination members differ in roster");
        if (v.source == "original") has_original = true;
    }
    if (!has_original) throw MissingOriginal();

    BiasVector out;
    out.metric = head.metric;
    out.dimension = head.dimension;
    std::string label;
    for (const BiasVector& v : members) {
        if (!label.empty()) label += "+";
        label += v.source;
    }
    out.source = label;
    out.roster = head.roster;
    out.values.resize(head.values.size());
    std::vector<double> column(members.size());
    for (std::size_t i = 0; i < head.values.size(); ++i) {
        for (std::size_t j = 0; j < members.size(); ++j) column[j] = members[j].values[i];
        out.values[i] = stats::mean(column);
    }
    return out;
}

// A run-plan cell with no score. Bias computation must not start while any exist.
struct ScoreGap {
    std::string prompt_id;
    AssessedModelId model;
    int seed = 0;
};

inline std::vector<ScoreGap> find_score_gaps(const ScoreSet& scores, const PromptSet& prompts,
                                             std::span<const AssessedModelId> roster,
                                             std::span<const int> seeds) {
    std::vector<ScoreGap> gaps;
    for (const PromptRecord& p : prompts.records())
        for (const AssessedModelId& m : roster)
            for (int seed : seeds)
                if (!scores.find(p.id, m, seed)) gaps.push_back({p.id, m, seed});
    return gaps;
}

}  // namespace corrfair
