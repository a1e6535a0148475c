#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "corrfair/cache.hpp"
#include "corrfair/http.hpp"
#include "corrfair/model.hpp"

namespace corrfair::score {

using nlohmann::json;

struct GenerationConfig {
    int max_new_tokens = 25;
    int min_new_tokens = 0;
    bool sampling = true;
    int beams = 1;
    std::vector<int> seeds{0, 1, 2, 3, 4};

    void validate() const {
        if (min_new_tokens < 0) throw ConfigError("min_new_tokens < 0");
        if (max_new_tokens < min_new_tokens) throw ConfigError("max_new_tokens < min_new_tokens");
        if (beams < 1) throw ConfigError("beams < 1");
        if (sampling && beams != 1) throw ConfigError("beam search and sampling are exclusive");
        if (seeds.empty()) throw ConfigError("at least one seed required");
    }
};

struct ModelEndpoint {
    AssessedModelId name;
    std::string endpoint_url;
    std::string api_key_env;
    bool chat = false;           // completion-style by default
    std::string payload_model;   // defaults to name

    const std::string& model_id() const { return payload_model.empty() ? name : payload_model; }
};

struct ScoreChannel {
    std::string name = "toxicity";
    std::string endpoint_url;
    std::string api_key_env;
    std::size_t batch_size = 64;

    void validate() const {
        if (name.empty()) throw ConfigError("score channel name empty");
        if (batch_size < 1) throw ConfigError("score channel batch_size < 1");
    }
};

struct EndpointOptions {
    std::size_t concurrency = 4;
    http::RetryPolicy retry;
    std::ostream* trace = nullptr;
};

struct Generated {
    std::string prompt_id;
    int seed = 0;
    std::string continuation;
};

struct GenerationGap {
    std::string prompt_id;
    int seed = 0;
    std::string reason;
};

struct GenerateResult {
    std::vector<Generated> items;  // (prompt, seed) order of the inputs
    std::vector<GenerationGap> gaps;
    std::uint64_t live_calls = 0;
};

namespace detail {

inline http::Headers auth_headers(const std::string& api_key_env) {
    http::Headers headers{{"Content-Type", "application/json"}};
    if (!api_key_env.empty()) {
        const char* key = std::getenv(api_key_env.c_str());
        if (key && *key) headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

inline json generation_payload(const ModelEndpoint& endpoint, const std::string& text, int seed,
                               const GenerationConfig& cfg) {
    json payload{{"model", endpoint.model_id()},
                 {"max_tokens", cfg.max_new_tokens},
                 {"seed", seed},
                 {"temperature", cfg.sampling ? 1.0 : 0.0}};
    if (cfg.min_new_tokens > 0) payload["min_tokens"] = cfg.min_new_tokens;
    if (endpoint.chat) {
        payload["messages"] = json::array({{{"role", "user"}, {"content", text}}});
    } else {
        payload["prompt"] = text;
    }
    return payload;
}

inline std::string extract_continuation(const json& body, bool chat) {
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) throw Error("response has no choices");
    if (chat) return choices[0].at("message").at("content").get<std::string>();
    return choices[0].at("text").get<std::string>();
}

}  // namespace detail

// One continuation per (prompt, seed). Seeds go to the endpoint verbatim;
// endpoints that ignore them still produce labeled replicates. Cached
// idempotently by (model, text, seed, decoding config).
inline GenerateResult generate_continuations(const std::vector<const PromptRecord*>& prompts,
                                             const ModelEndpoint& endpoint,
                                             const GenerationConfig& cfg,
                                             http::Transport& transport,
                                             const DiskCache* cache = nullptr,
                                             const EndpointOptions& opts = {}) {
    cfg.validate();
    if (endpoint.name.empty()) throw UnsupportedModel("(unnamed)");

    struct Job {
        const PromptRecord* prompt;
        int seed;
    };
    std::vector<Job> jobs;
    for (const PromptRecord* p : prompts)
        for (int seed : cfg.seeds) jobs.push_back({p, seed});

    GenerateResult result;
    if (jobs.empty()) return result;

    const std::string cfg_digest = json{{"max_tokens", cfg.max_new_tokens},
                                        {"min_tokens", cfg.min_new_tokens},
                                        {"sampling", cfg.sampling},
                                        {"beams", cfg.beams}}
                                       .dump();

    std::vector<std::optional<Generated>> slots(jobs.size());
    std::vector<std::string> reasons(jobs.size());
    std::atomic<std::uint64_t> live_calls{0};
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            const std::string key =
                DiskCache::key_of({"generate", endpoint.name, endpoint.model_id(), job.prompt->text,
                                   std::to_string(job.seed), cfg_digest,
                                   endpoint.chat ? "chat" : "completion"});
            std::string body;
            if (cache) {
                if (auto hit = cache->get(key)) body = *hit;
            }
            if (body.empty()) {
                const json payload =
                    detail::generation_payload(endpoint, job.prompt->text, job.seed, cfg);
                try {
                    const http::Response resp = http::post_with_retry(
                        transport, endpoint.endpoint_url,
                        endpoint.chat ? "/chat/completions" : "/completions", payload.dump(),
                        detail::auth_headers(endpoint.api_key_env), opts.retry, opts.trace);
                    live_calls.fetch_add(1);
                    body = resp.body;
                    if (cache) cache->put(key, body);
                } catch (const EndpointError& e) {
                    reasons[i] = e.what();
                    continue;
                }
            }
            try {
                slots[i] = Generated{job.prompt->id, job.seed,
                                     detail::extract_continuation(json::parse(body), endpoint.chat)};
            } catch (const std::exception& e) {
                reasons[i] = e.what();
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.concurrency, jobs.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    result.live_calls = live_calls.load();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (slots[i]) {
            result.items.push_back(std::move(*slots[i]));
        } else {
            result.gaps.push_back({jobs[i].prompt->id, jobs[i].seed, reasons[i]});
        }
    }
    return result;
}

struct ScoreItem {
    std::string prompt_id;
    AssessedModelId model;
    int seed = 0;
    std::string continuation;
};

// Attaches a score in [0,1] to every item through the channel endpoint,
// batching unique texts. Out-of-range endpoint outputs are rejected outright.
// Empty continuations are scored like any other text, never skipped.
inline std::vector<ScoredContinuation> score_continuations(const std::vector<ScoreItem>& items,
                                                           const ScoreChannel& channel,
                                                           http::Transport& transport,
                                                           const DiskCache* cache = nullptr,
                                                           const EndpointOptions& opts = {}) {
    channel.validate();
    std::map<std::string, double> known;  // text -> score
    std::vector<std::string> pending;
    for (const ScoreItem& item : items) {
        if (known.count(item.continuation)) continue;
        if (cache) {
            const std::string key = DiskCache::key_of({"score", channel.name, item.continuation});
            if (auto hit = cache->get(key)) {
                known[item.continuation] = json::parse(*hit).get<double>();
                continue;
            }
        }
        known.emplace(item.continuation, -1.0);  // placeholder: needs the endpoint
        pending.push_back(item.continuation);
    }

    for (std::size_t begin = 0; begin < pending.size(); begin += channel.batch_size) {
        const std::size_t end = std::min(begin + channel.batch_size, pending.size());
        json texts = json::array();
        for (std::size_t i = begin; i < end; ++i) texts.push_back(pending[i]);
        const http::Response resp = http::post_with_retry(
            transport, channel.endpoint_url, "/", json{{"texts", texts}}.dump(),
            detail::auth_headers(channel.api_key_env), opts.retry, opts.trace);
        json body;
        try {
            body = json::parse(resp.body);
        } catch (const json::exception& e) {
            throw EndpointError(channel.endpoint_url, std::string("bad JSON: ") + e.what());
        }
        if (!body.contains("scores") || !body["scores"].is_array() ||
            body["scores"].size() != end - begin)
            throw EndpointError(channel.endpoint_url, "scores array missing or wrong length");
        for (std::size_t i = begin; i < end; ++i) {
            const double value = body["scores"][i - begin].get<double>();
            if (!(value >= 0.0 && value <= 1.0)) throw ScoreOutOfRange(value);
            known[pending[i]] = value;
            if (cache)
                cache->put(DiskCache::key_of({"score", channel.name, pending[i]}),
                           json(value).dump());
        }
    }

    std::vector<ScoredContinuation> out;
    out.reserve(items.size());
    for (const ScoreItem& item : items) {
        ScoredContinuation s;
        s.prompt_id = item.prompt_id;
        s.model = item.model;
        s.seed = item.seed;
        s.continuation = item.continuation;
        s.toxicity = known.at(item.continuation);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace corrfair::score
