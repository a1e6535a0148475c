#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "corrfair/model.hpp"
#include "corrfair/search.hpp"
#include "corrfair/stats.hpp"

namespace corrfair::report {

using nlohmann::json;

// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

using Cell = std::variant<std::string, double, std::int64_t, bool>;

inline std::string cell_to_string(const Cell& c) {
    if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
    if (std::holds_alternative<double>(c)) return format_double(std::get<double>(c));
    if (std::holds_alternative<std::int64_t>(c)) return std::to_string(std::get<std::int64_t>(c));
    return std::get<bool>(c) ? "true" : "false";
}

inline json cell_to_json(const Cell& c) {
    if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
    if (std::holds_alternative<double>(c)) return std::get<double>(c);
    if (std::holds_alternative<std::int64_t>(c)) return std::get<std::int64_t>(c);
    return std::get<bool>(c);
}

// RFC-4180 field quoting: quotes around fields holding comma, quote, or
// newline; embedded quotes doubled. LF line endings.
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::string> notes;

    std::string to_csv() const {
        std::string out;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out += ',';
            out += csv_escape(columns[i]);
        }
        out += '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out += ',';
                out += csv_escape(cell_to_string(row[i]));
            }
            out += '\n';
        }
        return out;
    }

    json to_json() const {
        json rows_json = json::array();
        for (const auto& row : rows) {
            json obj = json::object();
            for (std::size_t i = 0; i < row.size(); ++i) obj[columns[i]] = cell_to_json(row[i]);
            rows_json.push_back(std::move(obj));
        }
        return json{{"columns", columns}, {"rows", rows_json}, {"notes", notes}};
    }
};

// Fig-5-style sweep: the selected correlation against the all-combination
// average, one row per combination size.
inline Table sweep_table(const std::vector<search::SelectionResult>& results) {
    Table t;
    t.columns = {"k", "selected_r", "selected_p", "baseline_mean_r"};
    for (const auto& r : results) {
        t.rows.push_back({static_cast<std::int64_t>(r.k), r.correlation.r, r.correlation.p_value,
                          r.baseline_mean_r});
    }
    return t;
}

struct RankingOutcome {
    Table table;  // metric, phase, rank, model, normalized_bias
    bool top1_agree_before = false;
    bool top1_agree_after = false;
    std::size_t overlap_before = 0;
    std::size_t overlap_after = 0;

    json summary() const {
        return json{{"top1_agree_before", top1_agree_before},
                    {"top1_agree_after", top1_agree_after},
                    {"overlap_before", overlap_before},
                    {"overlap_after", overlap_after}};
    }
};

namespace detail {

struct Ranked {
    std::vector<std::size_t> order;     // model indices, most biased first
    std::vector<double> normalized;
};

inline Ranked rank_models(const BiasVector& vec) {
    Ranked out;
    out.normalized = stats::min_max_normalize(vec.values);
    out.order.resize(vec.values.size());
    for (std::size_t i = 0; i < out.order.size(); ++i) out.order[i] = i;
    std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        return out.normalized[a] > out.normalized[b];  // ties keep roster order
    });
    return out;
}

inline std::set<std::string> top_set(const BiasVector& vec, const Ranked& ranked, std::size_t n) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < n && i < ranked.order.size(); ++i)
        out.insert(vec.roster[ranked.order[i]]);
    return out;
}

}  // namespace detail

// Most-biased-model rankings per metric, before (original prompts) and after
// (selected combination), with cross-metric agreement counters.
inline RankingOutcome ranking_table(const BiasVector& before_a, const BiasVector& before_b,
                                    const BiasVector& after_a, const BiasVector& after_b,
                                    std::size_t top_n, WarningSink* warnings = nullptr) {
    const std::size_t roster_size = before_a.roster.size();
    if (top_n > roster_size) {
        if (warnings)
            warnings->warn("top_n " + std::to_string(top_n) + " clamped to roster size " +
                           std::to_string(roster_size));
        top_n = roster_size;
    }

    RankingOutcome out;
    out.table.columns = {"metric", "phase", "rank", "model", "normalized_bias"};

    const auto emit = [&](const BiasVector& vec, const std::string& phase,
                          const detail::Ranked& ranked) {
        for (std::size_t i = 0; i < top_n; ++i) {
            const std::size_t idx = ranked.order[i];
            out.table.rows.push_back({vec.metric, phase, static_cast<std::int64_t>(i + 1),
                                      vec.roster[idx], ranked.normalized[idx]});
        }
    };

    const auto rb_a = detail::rank_models(before_a);
    const auto rb_b = detail::rank_models(before_b);
    const auto ra_a = detail::rank_models(after_a);
    const auto ra_b = detail::rank_models(after_b);
    emit(before_a, "before", rb_a);
    emit(after_a, "after", ra_a);
    emit(before_b, "before", rb_b);
    emit(after_b, "after", ra_b);

    out.top1_agree_before =
        before_a.roster[rb_a.order[0]] == before_b.roster[rb_b.order[0]];
    out.top1_agree_after = after_a.roster[ra_a.order[0]] == after_b.roster[ra_b.order[0]];

    const auto before_overlap = detail::top_set(before_a, rb_a, top_n);
    for (const auto& m : detail::top_set(before_b, rb_b, top_n))
        out.overlap_before += before_overlap.count(m);
    const auto after_overlap = detail::top_set(after_a, ra_a, top_n);
    for (const auto& m : detail::top_set(after_b, ra_b, top_n))
        out.overlap_after += after_overlap.count(m);
    return out;
}

// Fig-6-style stacked fractions: per k, the share of selected augmented
// members coming from each augmenter. k = 1 has no augmented members and is
// noted instead of emitted.
inline Table contribution_table(
    const std::map<std::size_t, std::map<std::string, double>>& contributions_per_k) {
    std::set<std::string> augmenters;
    for (const auto& [k, fractions] : contributions_per_k)
        for (const auto& [name, frac] : fractions) augmenters.insert(name);

    Table t;
    t.columns = {"k"};
    for (const auto& name : augmenters) t.columns.push_back(name);
    for (const auto& [k, fractions] : contributions_per_k) {
        if (k <= 1) {
            t.notes.push_back("k=1 omitted: original-only combinations have no augmented members");
            continue;
        }
        std::vector<Cell> row{static_cast<std::int64_t>(k)};
        for (const auto& name : augmenters) {
            auto it = fractions.find(name);
            row.push_back(it == fractions.end() ? 0.0 : it->second);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace corrfair::report
