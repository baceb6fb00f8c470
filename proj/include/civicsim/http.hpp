#pragma once

// httplib-based transport for OpenAI-style and Anthropic-style providers.
// Define CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) in the including
// binary to talk to https endpoints.

#include <httplib.h>

#include <memory>
#include <string>

#include "civicsim/providers.hpp"

namespace civicsim {

class HttpBackend : public CompletionBackend {
public:
    std::optional<std::string> send(const ProviderHandle& handle, const std::string& prompt,
                                    std::string& error) override {
        const char* key = std::getenv(handle.auth_env.c_str());
        if (key == nullptr) {
            error = "auth variable " + handle.auth_env + " missing";
            return std::nullopt;
        }
        const HttpRequestSpec spec = build_http_request(handle, prompt, key);

        httplib::Client client(handle.endpoint);
        client.set_connection_timeout(std::chrono::duration<double>(handle.timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(handle.timeout_s));
        httplib::Headers headers(spec.headers.begin(), spec.headers.end());

        auto res = client.Post(spec.path, headers, spec.body, "application/json");
        if (!res) {
            error = "transport error: " + httplib::to_string(res.error());
            return std::nullopt;
        }
        if (res->status != 200) {
            error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            return std::nullopt;
        }
        try {
            return extract_response_text(handle.request_shape, res->body);
        } catch (const Error& e) {
            error = e.what();
            return std::nullopt;
        }
    }
};

// Builds the right client for a handle: scripted mock or live HTTP.
inline std::unique_ptr<ProviderClient> make_client(const ProviderHandle& handle,
                                                   const ResponseCache* cache = nullptr) {
    if (handle.request_shape == RequestShape::Mock) return make_mock_client(handle, cache);
    return std::make_unique<ProviderClient>(handle, std::make_unique<HttpBackend>(), cache);
}

}  // namespace civicsim
