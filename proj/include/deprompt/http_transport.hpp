#pragma once

// Default HTTP transport for the remote gateway backend. Kept out of
// gateway.hpp so that stub-only translation units never pull in httplib.

#include <memory>
#include <string>

#include <httplib.h>

#include "deprompt/gateway.hpp"

namespace deprompt {

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(const std::string& base_url) : base_url_(base_url) {}

    HttpResponse post(const std::string& path, const std::string& body,
                      const std::vector<HttpHeader>& headers, int timeout_ms) override {
        std::string host;
        std::string prefix;
        split_url(base_url_, host, prefix);
        httplib::Client client(host);
        client.set_connection_timeout(0, timeout_ms * 1000);
        client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        httplib::Headers hs;
        for (const HttpHeader& h : headers) hs.emplace(h.name, h.value);
        auto result = client.Post(prefix + path, hs, body, "application/json");
        HttpResponse out;
        if (!result) {
            out.transport_error = true;
            out.error = httplib::to_string(result.error());
            return out;
        }
        out.status = result->status;
        out.body = result->body;
        return out;
    }

private:
    // "http://host:port/v1" -> scheme://host:port plus path prefix "/v1"
    static void split_url(const std::string& url, std::string& host, std::string& prefix) {
        size_t scheme = url.find("://");
        size_t path_start = scheme == std::string::npos
                                ? url.find('/')
                                : url.find('/', scheme + 3);
        if (path_start == std::string::npos) {
            host = url;
            prefix.clear();
        } else {
            host = url.substr(0, path_start);
            prefix = url.substr(path_start);
            if (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        }
    }

    std::string base_url_;
};

inline std::shared_ptr<HttpTransport> make_http_transport(const GatewayConfig& cfg) {
    return std::make_shared<HttplibTransport>(cfg.endpoint);
}

} // namespace deprompt
