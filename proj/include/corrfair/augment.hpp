#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "corrfair/cache.hpp"
#include "corrfair/http.hpp"
#include "corrfair/model.hpp"

namespace corrfair::augment {

using nlohmann::json;

enum class ApiStyle { kChat, kCompletion };

inline std::string api_style_name(ApiStyle s) {
    return s == ApiStyle::kChat ? "chat" : "completion";
}

inline ApiStyle parse_api_style(const std::string& s) {
    if (s == "chat") return ApiStyle::kChat;
    if (s == "completion") return ApiStyle::kCompletion;
    throw ConfigError("api_style must be 'chat' or 'completion', got '" + s + "'");
}

// Instruction templates for the two endpoint styles.
inline constexpr std::string_view kChatInstruction =
    "Paraphrase each of the following while not writing the original sentences: ";
inline constexpr std::string_view kCompletionSuffix = " can be paraphrased as...";

struct AugmenterConfig {
    std::string name;
    std::string endpoint_url;
    ApiStyle api_style = ApiStyle::kChat;
    double temperature = 0.95;
    double top_p = 1.0;
    int max_tokens = 800;
    int paraphrases_per_prompt = 5;  // K
    std::string model;               // payload model id; defaults to name
    std::string api_key_env;         // environment variable holding the API key

    const std::string& payload_model() const { return model.empty() ? name : model; }

    void validate() const {
        if (name.empty()) throw ConfigError("augmenter name empty");
        if (temperature < 0) throw ConfigError("augmenter '" + name + "': temperature < 0");
        if (!(top_p > 0 && top_p <= 1)) throw ConfigError("augmenter '" + name + "': top_p outside (0,1]");
        if (max_tokens < 1) throw ConfigError("augmenter '" + name + "': max_tokens < 1");
        if (paraphrases_per_prompt < 1)
            throw ConfigError("augmenter '" + name + "': paraphrases_per_prompt < 1");
    }
};

struct RequestSpec {
    std::string path;  // /chat/completions or /completions
    json payload;
};

inline RequestSpec build_paraphrase_request(const PromptRecord& prompt, const AugmenterConfig& cfg) {
    if (!prompt.variant.is_original()) throw NotOriginal(prompt.id);
    if (prompt.text.empty()) throw Error("prompt '" + prompt.id + "' has empty text");
    cfg.validate();
    RequestSpec out;
    if (cfg.api_style == ApiStyle::kChat) {
        out.path = "/chat/completions";
        out.payload = {{"model", cfg.payload_model()},
                       {"messages", json::array({{{"role", "user"},
                                                  {"content", std::string(kChatInstruction) + prompt.text}}})},
                       {"temperature", cfg.temperature},
                       {"top_p", cfg.top_p},
                       {"max_tokens", cfg.max_tokens}};
    } else {
        out.path = "/completions";
        out.payload = {{"model", cfg.payload_model()},
                       {"prompt", prompt.text + std::string(kCompletionSuffix)},
                       {"temperature", cfg.temperature},
                       {"top_p", cfg.top_p},
                       {"max_tokens", cfg.max_tokens}};
    }
    return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// "3. text", "3) text", "- text", "* text" -> "text"; wrapping quotes removed.
inline std::string strip_listing_markers(std::string s) {
    s = trim(s);
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')' || s[i] == ':')) {
        s = trim(std::string_view(s).substr(i + 1));
    } else if (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+')) {
        s = trim(std::string_view(s).substr(1));
    }
    while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                             (s.front() == '\'' && s.back() == '\''))) {
        s = trim(std::string_view(s).substr(1, s.size() - 2));
    }
    return s;
}

inline std::string extract_model_text(const json& body, ApiStyle style) {
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) throw Error("response has no choices");
    if (style == ApiStyle::kChat) return choices[0].at("message").at("content").get<std::string>();
    return choices[0].at("text").get<std::string>();
}

}  // namespace detail

// Splits raw model output into distinct paraphrase candidates: one per line,
// listing markers and wrapping quotes stripped, case-insensitive dedup, and
// candidates equal to the original dropped. Throws InsufficientParaphrases
// (carrying the partial list) when fewer than `expected` remain.
inline std::vector<std::string> parse_paraphrases(const std::string& raw, std::size_t expected,
                                                  const std::string& original = {}) {
    if (raw.empty()) throw Error("empty model output");
    std::vector<std::string> items;
    std::set<std::string> seen;
    if (!original.empty()) seen.insert(detail::lower(detail::trim(original)));
    std::size_t begin = 0;
    while (begin <= raw.size() && items.size() < expected) {
        std::size_t end = raw.find('\n', begin);
        if (end == std::string::npos) end = raw.size();
        const std::string candidate =
            detail::strip_listing_markers(raw.substr(begin, end - begin));
        begin = end + 1;
        if (candidate.empty()) continue;
        if (candidate.back() == ':') continue;  // listing headers ("Here are ...:")
        const std::string key = detail::lower(candidate);
        if (!seen.insert(key).second) continue;
        items.push_back(candidate);
        if (end == raw.size()) break;
    }
    if (items.size() < expected)
        throw InsufficientParaphrases(items.size(), expected, items);
    return items;
}

struct AugmentGap {
    std::string prompt_id;
    std::string augmenter;
    int index = 0;
    std::string reason;
};

struct AugmentOptions {
    std::size_t concurrency = 4;  // in-flight requests per endpoint
    http::RetryPolicy retry;
    std::ostream* trace = nullptr;
    int parse_retries = 2;  // extra samples when a live response parses short
};

struct AugmentResult {
    std::vector<PromptRecord> records;  // paraphrases only, deterministic order
    std::vector<AugmentGap> gaps;
    json manifest;
};

namespace detail {

struct JobOutcome {
    std::vector<std::optional<std::string>> texts;  // [K], nullopt = gap
    std::vector<std::string> reasons;               // parallel gap reasons
    bool cache_hit = false;
    std::uint64_t live_calls = 0;
};

inline http::Headers auth_headers(const AugmenterConfig& cfg) {
    http::Headers headers{{"Content-Type", "application/json"}};
    if (!cfg.api_key_env.empty()) {
        const char* key = std::getenv(cfg.api_key_env.c_str());
        if (key && *key) headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

inline std::string cache_key(const AugmenterConfig& cfg, const PromptRecord& prompt, int index) {
    const std::string decoding = json{{"temperature", cfg.temperature},
                                      {"top_p", cfg.top_p},
                                      {"max_tokens", cfg.max_tokens},
                                      {"model", cfg.payload_model()}}
                                     .dump();
    const std::string_view tmpl =
        cfg.api_style == ApiStyle::kChat ? kChatInstruction : kCompletionSuffix;
    return DiskCache::key_of(
        {cfg.name, tmpl, prompt.text, decoding, std::to_string(index)});
}

// One original under one augmenter: a single listing request in chat mode,
// K independent requests in completion mode.
inline JobOutcome run_job(const PromptRecord& original, const AugmenterConfig& cfg,
                          http::Transport& transport, const DiskCache* cache,
                          const AugmentOptions& opts) {
    const std::size_t k = static_cast<std::size_t>(cfg.paraphrases_per_prompt);
    JobOutcome out;
    out.texts.resize(k);
    out.reasons.resize(k);
    const RequestSpec req = build_paraphrase_request(original, cfg);
    const std::string body = req.payload.dump();

    auto fetch = [&](int index, bool allow_cache) -> std::pair<std::string, bool> {
        const std::string key = cache_key(cfg, original, index);
        if (allow_cache && cache) {
            if (auto hit = cache->get(key)) return {*hit, true};
        }
        const http::Response resp = http::post_with_retry(
            transport, cfg.endpoint_url, req.path, body, auth_headers(cfg), opts.retry, opts.trace);
        ++out.live_calls;
        if (cache) cache->put(key, resp.body);
        return {resp.body, false};
    };

    if (cfg.api_style == ApiStyle::kChat) {
        // listing request cached under index 0
        std::vector<std::string> parsed;
        std::string failure;
        for (int attempt = 0; attempt <= opts.parse_retries; ++attempt) {
            std::string payload;
            bool from_cache = false;
            try {
                std::tie(payload, from_cache) = fetch(0, attempt == 0);
            } catch (const EndpointError& e) {
                failure = e.what();
                break;
            }
            if (attempt == 0) out.cache_hit = from_cache;
            try {
                parsed = parse_paraphrases(extract_model_text(json::parse(payload), cfg.api_style),
                                           k, original.text);
                failure.clear();
                break;
            } catch (const InsufficientParaphrases& e) {
                parsed = e.items;  // best so far
                failure = e.what();
                if (from_cache) break;  // never re-sample over a warm cache
            } catch (const std::exception& e) {
                failure = e.what();
                break;
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            if (i < parsed.size()) {
                out.texts[i] = parsed[i];
            } else {
                out.reasons[i] = failure.empty() ? "missing paraphrase" : failure;
            }
        }
        return out;
    }

    // completion mode: one request per index, cross-index dedup
    std::set<std::string> used{lower(trim(original.text))};
    out.cache_hit = true;
    for (std::size_t i = 0; i < k; ++i) {
        const int index = static_cast<int>(i) + 1;
        std::string failure;
        for (int attempt = 0; attempt <= opts.parse_retries; ++attempt) {
            std::string payload;
            bool from_cache = false;
            try {
                std::tie(payload, from_cache) = fetch(index, attempt == 0);
            } catch (const EndpointError& e) {
                failure = e.what();
                break;
            }
            if (!from_cache) out.cache_hit = false;
            try {
                const auto items = parse_paraphrases(
                    extract_model_text(json::parse(payload), cfg.api_style), 1, original.text);
                if (!used.insert(lower(items[0])).second) {
                    failure = "duplicate of an earlier paraphrase";
                    if (from_cache) break;
                    continue;
                }
                out.texts[i] = items[0];
                failure.clear();
                break;
            } catch (const InsufficientParaphrases& e) {
                failure = e.what();
                if (from_cache) break;
            } catch (const std::exception& e) {
                failure = e.what();
                break;
            }
        }
        if (!out.texts[i]) out.reasons[i] = failure;
    }
    return out;
}

}  // namespace detail

// Paraphrases every original under every augmenter. Results are cached and
// idempotent per (augmenter, original, index); endpoint failures become gap
// entries rather than aborting the whole set.
inline AugmentResult augment_prompt_set(const PromptSet& originals,
                                        const std::vector<AugmenterConfig>& augmenters,
                                        http::Transport& transport, const DiskCache* cache = nullptr,
                                        const AugmentOptions& opts = {}) {
    for (const PromptRecord& p : originals.records())
        if (!p.variant.is_original()) throw NotOriginal(p.id);

    AugmentResult result;
    result.manifest = json::array();

    for (const AugmenterConfig& cfg : augmenters) {
        cfg.validate();
        const auto& records = originals.records();
        std::vector<detail::JobOutcome> outcomes(records.size());

        const std::size_t workers =
            std::max<std::size_t>(1, std::min(opts.concurrency, records.size()));
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= records.size()) return;
                outcomes[i] = detail::run_job(records[i], cfg, transport, cache, opts);
            }
        };
        if (workers == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        std::uint64_t live_calls = 0, cache_hits = 0;
        std::size_t gap_count = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const PromptRecord& orig = records[i];
            const detail::JobOutcome& job = outcomes[i];
            live_calls += job.live_calls;
            if (job.cache_hit) ++cache_hits;
            for (std::size_t idx = 0; idx < job.texts.size(); ++idx) {
                const int index = static_cast<int>(idx) + 1;
                if (job.texts[idx]) {
                    PromptRecord rec;
                    rec.id = orig.id + "#" + cfg.name + "#" + std::to_string(index);
                    rec.metric = orig.metric;
                    rec.dimension = orig.dimension;
                    rec.subgroup = orig.subgroup;
                    rec.variant = VariantId::paraphrase(cfg.name, index);
                    rec.parent_id = orig.id;
                    rec.text = *job.texts[idx];
                    result.records.push_back(std::move(rec));
                } else {
                    result.gaps.push_back({orig.id, cfg.name, index, job.reasons[idx]});
                    ++gap_count;
                }
            }
        }
        result.manifest.push_back(
            {{"augmenter", cfg.name},
             {"mode", cfg.api_style == ApiStyle::kChat ? "chat-listing" : "completion-per-index"},
             {"paraphrases_per_prompt", cfg.paraphrases_per_prompt},
             {"originals", records.size()},
             {"live_requests", live_calls},
             {"warm_jobs", cache_hits},
             {"gaps", gap_count}});
    }
    return result;
}

}  // namespace corrfair::augment
