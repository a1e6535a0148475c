#pragma once

// Real transport over cpp-httplib. Split from http.hpp so that tests and the
// pipeline can use the transport seam without pulling sockets in.

#include <httplib.h>

#include "corrfair/http.hpp"

namespace corrfair::http {

class HttplibTransport : public Transport {
  public:
    explicit HttplibTransport(int connect_timeout_s = 10, int read_timeout_s = 120)
        : connect_timeout_s_(connect_timeout_s), read_timeout_s_(read_timeout_s) {}

  protected:
    Response do_post(const std::string& base_url, const std::string& path, const std::string& body,
                     const Headers& headers) override {
        httplib::Client client(base_url);
        client.set_connection_timeout(connect_timeout_s_);
        client.set_read_timeout(read_timeout_s_);
        httplib::Headers hs;
        for (const auto& [k, v] : headers) hs.emplace(k, v);
        auto result = client.Post(path, hs, body, "application/json");
        Response out;
        if (!result) {
            out.status = 0;
            out.error = httplib::to_string(result.error());
            return out;
        }
        out.status = result->status;
        out.body = result->body;
        return out;
    }

  private:
    int connect_timeout_s_;
    int read_timeout_s_;
};

}  // namespace corrfair::http
