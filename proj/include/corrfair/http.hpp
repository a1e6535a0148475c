#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "corrfair/errors.hpp"
#include "corrfair/hashing.hpp"

namespace corrfair::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Response {
    int status = 0;        // 0 means transport failure
    std::string body;
    std::string error;     // transport-level detail
    bool ok() const { return status >= 200 && status < 300; }
};

// POST-only transport seam. Every issued request is counted, which the
// warm-cache audits rely on.
class Transport {
  public:
    virtual ~Transport() = default;

    Response post(const std::string& base_url, const std::string& path, const std::string& body,
                  const Headers& headers = {}) {
        count_.fetch_add(1, std::memory_order_relaxed);
        return do_post(base_url, path, body, headers);
    }

    std::uint64_t requests_issued() const { return count_.load(std::memory_order_relaxed); }
    void reset_counter() { count_.store(0, std::memory_order_relaxed); }

  protected:
    virtual Response do_post(const std::string& base_url, const std::string& path,
                             const std::string& body, const Headers& headers) = 0;

  private:
    std::atomic<std::uint64_t> count_{0};
};

// In-process transport for tests and dry runs.
class MockTransport : public Transport {
  public:
    using Handler = std::function<Response(const std::string& path, const std::string& body)>;
    explicit MockTransport(Handler handler) : handler_(std::move(handler)) {}

  protected:
    Response do_post(const std::string&, const std::string& path, const std::string& body,
                     const Headers&) override {
        return handler_(path, body);
    }

  private:
    Handler handler_;
};

struct RetryPolicy {
    int max_retries = 3;           // additional attempts after the first
    double base_delay_ms = 250.0;  // doubled per attempt, plus jitter
    double max_delay_ms = 4000.0;
    std::uint64_t jitter_seed = 0;
};

inline bool retryable(const Response& r) {
    return r.status == 0 || r.status == 429 || (r.status >= 500 && r.status < 600);
}

inline void redact_and_trace(std::ostream* trace, const std::string& url, const std::string& path,
                             const std::string& body, const Headers& headers, const Response& resp) {
    if (!trace) return;
    *trace << "POST " << url << path;
    for (const auto& [k, v] : headers) {
        if (k == "Authorization") {
            *trace << " [" << k << ": <redacted>]";
        } else {
            *trace << " [" << k << ": " << v << "]";
        }
    }
    *trace << "\n  >> " << body << "\n  << " << resp.status << " " << resp.body << "\n";
}

// Exponential backoff with deterministic hash jitter on 429/5xx/transport
// failures. Throws EndpointError once the retry budget is exhausted.
inline Response post_with_retry(Transport& transport, const std::string& base_url,
                                const std::string& path, const std::string& body,
                                const Headers& headers = {}, const RetryPolicy& policy = {},
                                std::ostream* trace = nullptr) {
    Response resp;
    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
        resp = transport.post(base_url, path, body, headers);
        redact_and_trace(trace, base_url, path, body, headers, resp);
        if (resp.ok()) return resp;
        if (!retryable(resp) || attempt == policy.max_retries) break;
        hashing::Keyed key(policy.jitter_seed);
        key.add(body).add(attempt);
        const double jitter = key.unit();  // [0,1)
        double delay = policy.base_delay_ms * static_cast<double>(1 << attempt) * (1.0 + jitter);
        if (delay > policy.max_delay_ms) delay = policy.max_delay_ms;
        if (delay > 0)
            std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long>(delay * 1000)));
    }
    const std::string detail = resp.status ? ("HTTP " + std::to_string(resp.status) + ": " + resp.body)
                                           : ("transport: " + resp.error);
    throw EndpointError(base_url + path, detail);
}

}  // namespace corrfair::http
