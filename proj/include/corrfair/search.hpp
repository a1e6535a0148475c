#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "corrfair/bias.hpp"
#include "corrfair/model.hpp"
#include "corrfair/stats.hpp"

namespace corrfair::search {

// A prompt-variant combination. The original variant is always a member and
// is left implicit; `augmented` holds strictly increasing indices into the
// metric's augmented-variant list.
struct Combination {
    std::vector<std::size_t> augmented;

    std::size_t size() const { return augmented.size() + 1; }

    std::vector<VariantId> members(std::span<const VariantId> augmented_variants) const {
        std::vector<VariantId> out{VariantId::original()};
        for (std::size_t i : augmented) out.push_back(augmented_variants[i]);
        return out;
    }

    std::string label(std::span<const VariantId> augmented_variants) const {
        std::string out = "original";
        for (std::size_t i : augmented) out += "+" + augmented_variants[i].str();
        return out;
    }

    auto operator<=>(const Combination&) const = default;
};

// All combinations of the original plus (k-1) augmented variants, in
// lexicographic order of the augmented index lists.
inline std::vector<Combination> enumerate_combinations(std::size_t n_augmented, std::size_t k) {
    if (k < 1 || k > n_augmented + 1) throw SizeOutOfRange(k, n_augmented + 1);
    const std::size_t take = k - 1;
    std::vector<Combination> out;
    std::vector<std::size_t> cur;
    auto rec = [&](auto&& self, std::size_t start) -> void {
        if (cur.size() == take) {
            out.push_back(Combination{cur});
            return;
        }
        // not enough remaining indices to finish: prune
        for (std::size_t i = start; i + (take - cur.size()) <= n_augmented; ++i) {
            cur.push_back(i);
            self(self, i + 1);
            cur.pop_back();
        }
    };
    rec(rec, 0);
    return out;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        result = result * (n - k + i) / i;  // exact: result*(n-k+i) divisible by i here
    }
    return result;
}

// Per-metric input to the search: the variant list with its bias vectors.
struct MetricVariantData {
    MetricId metric;
    BiasDimension dimension;
    std::vector<AssessedModelId> roster;
    VariantId original;                     // kept for symmetry; always the original
    std::vector<VariantId> augmented;       // canonical order
    std::vector<double> original_values;    // [model]
    std::vector<std::vector<double>> augmented_values;  // [variant][model]

    static MetricVariantData from_bias_vectors(const std::map<VariantId, BiasVector>& vectors) {
        MetricVariantData out;
        auto orig_it = vectors.find(VariantId::original());
        if (orig_it == vectors.end()) throw MissingOriginal();
        out.metric = orig_it->second.metric;
        out.dimension = orig_it->second.dimension;
        out.roster = orig_it->second.roster;
        out.original = VariantId::original();
        out.original_values = orig_it->second.values;
        for (const auto& [variant, vec] : vectors) {
            if (variant.is_original()) continue;
            if (vec.roster != out.roster) throw MismatchedRoster("variant " + variant.str());
            out.augmented.push_back(variant);
            out.augmented_values.push_back(vec.values);
        }
        return out;
    }
};

// Combination bias vectors for one k, stored row-major, lexicographic order.
struct ComboMatrix {
    std::vector<Combination> combos;
    std::vector<double> values;  // combos.size() x n_models
    std::size_t n_models = 0;
};

// Decomposable combination semantics: element-wise mean of member vectors.
inline ComboMatrix build_combo_matrix(const MetricVariantData& data, std::size_t k) {
    ComboMatrix m;
    m.n_models = data.roster.size();
    m.combos = enumerate_combinations(data.augmented.size(), k);
    m.values.resize(m.combos.size() * m.n_models);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t c = 0; c < m.combos.size(); ++c) {
        double* row = m.values.data() + c * m.n_models;
        for (std::size_t j = 0; j < m.n_models; ++j) {
            double acc = data.original_values[j];
            for (std::size_t idx : m.combos[c].augmented) acc += data.augmented_values[idx][j];
            row[j] = acc * inv_k;
        }
    }
    return m;
}

// Pooled semantics: subgroup means over the union of member prompts.
inline ComboMatrix build_combo_matrix_pooled(const BiasAggregator& agg,
                                             const MetricVariantData& data, std::size_t k) {
    ComboMatrix m;
    m.n_models = data.roster.size();
    m.combos = enumerate_combinations(data.augmented.size(), k);
    m.values.resize(m.combos.size() * m.n_models);
    for (std::size_t c = 0; c < m.combos.size(); ++c) {
        const auto members = m.combos[c].members(data.augmented);
        const auto vec = agg.pooled_combination_vector(members, data.roster,
                                                       m.combos[c].label(data.augmented));
        std::copy(vec.values.begin(), vec.values.end(), m.values.begin() + c * m.n_models);
    }
    return m;
}

// Centered unit-norm rows: pairwise Pearson r becomes a plain dot product.
// Constant rows are excluded and reported.
struct StandardizedSet {
    std::vector<Combination> combos;       // included combos, enumeration order
    std::vector<Combination> excluded;     // degenerate (constant) combos
    std::vector<double> unit;              // combos.size() x n
    std::size_t n = 0;
};

inline StandardizedSet precompute_standardized(const ComboMatrix& m) {
    StandardizedSet s;
    s.n = m.n_models;
    for (std::size_t c = 0; c < m.combos.size(); ++c) {
        const double* row = m.values.data() + c * m.n_models;
        std::span<const double> span_row(row, m.n_models);
        const double mu = stats::mean(span_row);
        double norm2 = 0.0;
        for (double v : span_row) norm2 += (v - mu) * (v - mu);
        if (norm2 == 0.0) {
            s.excluded.push_back(m.combos[c]);
            continue;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        s.combos.push_back(m.combos[c]);
        for (double v : span_row) s.unit.push_back((v - mu) * inv);
    }
    return s;
}

struct SelectionResult {
    MetricId metric_a;
    MetricId metric_b;
    BiasDimension dimension;
    std::size_t k = 1;
    Combination combo_a;
    Combination combo_b;
    stats::CorrelationResult correlation;
    double baseline_mean_r = 0.0;
    std::uint64_t pairs_evaluated = 0;
    std::vector<Combination> excluded_a;
    std::vector<Combination> excluded_b;
};

namespace detail {

struct RowOutcome {
    double max_r = -2.0;
    std::size_t argmax_b = 0;
    double sum_r = 0.0;
};

// One combo_a row against every combo_b: running max (first index wins ties)
// plus a sequential row sum, so results do not depend on thread layout.
inline RowOutcome scan_row(const double* a_row, const StandardizedSet& b, std::size_t n) {
    RowOutcome out;
    const std::size_t rows_b = b.combos.size();
    for (std::size_t j = 0; j < rows_b; ++j) {
        const double* b_row = b.unit.data() + j * n;
        double dot = 0.0;
        for (std::size_t t = 0; t < n; ++t) dot += a_row[t] * b_row[t];
        if (dot > 1.0) dot = 1.0;
        if (dot < -1.0) dot = -1.0;
        out.sum_r += dot;
        if (dot > out.max_r) {
            out.max_r = dot;
            out.argmax_b = j;
        }
    }
    return out;
}

}  // namespace detail

// Exhaustive argmax over all (combo_a, combo_b) pairs of standardized sets.
// Ties resolve to the lexicographically smallest pair; the mean r over the
// evaluated pairs is the reported baseline.
inline SelectionResult select_best_pair(const StandardizedSet& a, const StandardizedSet& b,
                                        std::size_t k, unsigned jobs = 0) {
    if (a.combos.empty()) throw AllDegenerate("metric A");
    if (b.combos.empty()) throw AllDegenerate("metric B");
    if (a.n != b.n) throw MismatchedRoster("standardized sets differ in roster size");
    const std::size_t n = a.n;
    if (n < 3) throw TooFewSamples(n);

    const std::size_t rows_a = a.combos.size();
    std::vector<detail::RowOutcome> rows(rows_a);

    unsigned thread_count = jobs ? jobs : std::thread::hardware_concurrency();
    thread_count = std::max(1u, std::min<unsigned>(thread_count, rows_a));
    if (thread_count == 1) {
        for (std::size_t i = 0; i < rows_a; ++i)
            rows[i] = detail::scan_row(a.unit.data() + i * n, b, n);
    } else {
        std::atomic<std::size_t> next{0};
        constexpr std::size_t kBlock = 64;
        auto worker = [&] {
            for (;;) {
                const std::size_t begin = next.fetch_add(kBlock);
                if (begin >= rows_a) return;
                const std::size_t end = std::min(begin + kBlock, rows_a);
                for (std::size_t i = begin; i < end; ++i)
                    rows[i] = detail::scan_row(a.unit.data() + i * n, b, n);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < thread_count; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Deterministic sequential reduction over rows.
    std::size_t best_a = 0;
    double best_r = -2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < rows_a; ++i) {
        total += rows[i].sum_r;
        if (rows[i].max_r > best_r) {
            best_r = rows[i].max_r;
            best_a = i;
        }
    }

    SelectionResult result;
    result.k = k;
    result.combo_a = a.combos[best_a];
    result.combo_b = b.combos[rows[best_a].argmax_b];
    result.pairs_evaluated = static_cast<std::uint64_t>(rows_a) * b.combos.size();
    result.baseline_mean_r = total / static_cast<double>(result.pairs_evaluated);
    result.correlation.r = best_r;
    result.correlation.n = n;
    result.correlation.p_value = stats::pearson_p_value(best_r, n);
    result.excluded_a = a.excluded;
    result.excluded_b = b.excluded;
    return result;
}

struct SweepOptions {
    unsigned jobs = 0;
    bool pooled = false;
    const BiasAggregator* aggregator_a = nullptr;  // required when pooled
    const BiasAggregator* aggregator_b = nullptr;
};

// One SelectionResult per k in [k_lo, k_hi], ascending. k = 1 is the
// original-prompts-only point.
inline std::vector<SelectionResult> sweep_sizes(const MetricVariantData& a,
                                                const MetricVariantData& b, std::size_t k_lo,
                                                std::size_t k_hi, const SweepOptions& opts = {}) {
    if (k_lo < 1 || k_lo > k_hi) throw SizeOutOfRange(k_lo, k_hi);
    std::vector<SelectionResult> out;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const ComboMatrix ma = opts.pooled ? build_combo_matrix_pooled(*opts.aggregator_a, a, k)
                                           : build_combo_matrix(a, k);
        const ComboMatrix mb = opts.pooled ? build_combo_matrix_pooled(*opts.aggregator_b, b, k)
                                           : build_combo_matrix(b, k);
        SelectionResult r = select_best_pair(precompute_standardized(ma),
                                             precompute_standardized(mb), k, opts.jobs);
        r.metric_a = a.metric;
        r.metric_b = b.metric;
        r.dimension = a.dimension;
        out.push_back(std::move(r));
    }
    return out;
}

// Fraction of augmented members per augmenter for a single combination.
inline std::map<std::string, double> augmenter_fractions(const Combination& combo,
                                                         std::span<const VariantId> augmented) {
    if (combo.augmented.empty()) throw NoAugmentedMembers();
    std::map<std::string, double> counts;
    for (std::size_t idx : combo.augmented) counts[augmented[idx].augmenter] += 1.0;
    const double total = static_cast<double>(combo.augmented.size());
    for (auto& [name, c] : counts) c /= total;
    return counts;
}

// Fractions pooled over both selected combinations of a result.
inline std::map<std::string, double> augmenter_contributions(
    const SelectionResult& result, std::span<const VariantId> augmented_a,
    std::span<const VariantId> augmented_b) {
    const std::size_t total = result.combo_a.augmented.size() + result.combo_b.augmented.size();
    if (total == 0) throw NoAugmentedMembers();
    std::map<std::string, double> counts;
    for (std::size_t idx : result.combo_a.augmented) counts[augmented_a[idx].augmenter] += 1.0;
    for (std::size_t idx : result.combo_b.augmented) counts[augmented_b[idx].augmenter] += 1.0;
    for (auto& [name, c] : counts) c /= static_cast<double>(total);
    return counts;
}

}  // namespace corrfair::search
