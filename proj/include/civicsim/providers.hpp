#pragma once

// Uniform access to chat-completion backends: a deterministic scriptable
// mock plus OpenAI-style and Anthropic-style HTTP shapes. Every successful
// response is written to a content-addressed on-disk cache keyed by
// (provider name, full prompt text), which makes runs resumable and repeat
// queries free. Sampling temperature is pinned to zero and is not a
// per-call knob.
//
// The HTTP transport itself lives in civicsim/http.hpp so that binaries
// which only ever use the mock (tests) need not pull it in.

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "civicsim/detail/sha256.hpp"
#include "civicsim/domain.hpp"

namespace civicsim {

enum class RequestShape { OpenAiStyle, AnthropicStyle, Mock };

inline std::string request_shape_token(RequestShape s) {
    switch (s) {
        case RequestShape::OpenAiStyle: return "openai_style";
        case RequestShape::AnthropicStyle: return "anthropic_style";
        case RequestShape::Mock: return "mock";
    }
    throw DomainError("unknown request shape");
}

inline RequestShape request_shape_from_token(const std::string& s) {
    if (s == "openai_style") return RequestShape::OpenAiStyle;
    if (s == "anthropic_style") return RequestShape::AnthropicStyle;
    if (s == "mock") return RequestShape::Mock;
    throw FormatError("unknown request shape '" + s + "'");
}

struct ProviderHandle {
    std::string name;
    RequestShape request_shape = RequestShape::Mock;
    std::string endpoint;
    std::string auth_env;    // name of the environment variable holding the key
    std::string model_id;    // wire identifier; defaults to name when empty
    int max_retries = 3;
    double timeout_s = 60.0;
    int max_tokens = 1024;
    std::string mock_script;  // rule file, mock shape only

    static constexpr double kTemperature = 0.0;

    std::string wire_model() const { return model_id.empty() ? name : model_id; }
};

inline void to_json(json& j, const ProviderHandle& h) {
    j = json{{"name", h.name},
             {"request_shape", request_shape_token(h.request_shape)},
             {"endpoint", h.endpoint},
             {"auth_env", h.auth_env},
             {"model_id", h.model_id},
             {"max_retries", h.max_retries},
             {"timeout_s", h.timeout_s},
             {"max_tokens", h.max_tokens},
             {"mock_script", h.mock_script}};
}

inline void from_json(const json& j, ProviderHandle& h) {
    j.at("name").get_to(h.name);
    h.request_shape = request_shape_from_token(j.at("request_shape").get<std::string>());
    h.endpoint = j.value("endpoint", "");
    h.auth_env = j.value("auth_env", "");
    h.model_id = j.value("model_id", "");
    h.max_retries = j.value("max_retries", 3);
    h.timeout_s = j.value("timeout_s", 60.0);
    h.max_tokens = j.value("max_tokens", 1024);
    h.mock_script = j.value("mock_script", "");
}

// ---------------------------------------------------------------------------
// Cache

struct CacheKey {
    std::string provider;
    std::string digest;  // sha256 over provider name + '\n' + prompt text

    static CacheKey of(const std::string& provider, const std::string& prompt) {
        return CacheKey{provider, detail::sha256_hex(provider + "\n" + prompt)};
    }
};

namespace detail {

inline std::string now_utc_iso8601() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    const auto tmp = path.string() + ".tmp" + std::to_string(::getpid()) + "-" +
                     std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out.flush()) throw Error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

// Layout: <root>/<provider>/<digest>.txt plus <digest>.meta.json. Entries are
// verified against the stored length and content hash on lookup; anything
// inconsistent is reported through the warn callback and treated as absent.
class ResponseCache {
public:
    using WarnFn = std::function<void(const std::string&)>;

    explicit ResponseCache(std::filesystem::path root, WarnFn warn = {})
        : root_(std::move(root)), warn_(std::move(warn)) {}

    std::optional<std::string> lookup(const CacheKey& key) const {
        namespace fs = std::filesystem;
        const fs::path txt = entry_path(key, ".txt");
        const fs::path meta = entry_path(key, ".meta.json");
        const bool have_txt = fs::exists(txt);
        const bool have_meta = fs::exists(meta);
        if (!have_txt && !have_meta) return std::nullopt;
        if (!have_txt || !have_meta) {
            warn("cache entry " + key.digest + " is incomplete; ignoring it");
            return std::nullopt;
        }
        json meta_doc = json::parse(std::ifstream(meta), nullptr, false);
        if (meta_doc.is_discarded() || !meta_doc.is_object()) {
            warn("cache entry " + key.digest + " has unreadable metadata; ignoring it");
            return std::nullopt;
        }
        std::ifstream in(txt, std::ios::binary);
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto expected_len = meta_doc.value("response_length", std::uint64_t{0});
        const auto expected_sha = meta_doc.value("response_sha256", std::string());
        if (body.size() != expected_len || detail::sha256_hex(body) != expected_sha) {
            warn("cache entry " + key.digest + " fails verification; ignoring it");
            return std::nullopt;
        }
        return body;
    }

    void store(const CacheKey& key, const std::string& response) const {
        namespace fs = std::filesystem;
        fs::create_directories(root_ / key.provider);
        json meta = {{"prompt_digest", key.digest},
                     {"response_length", response.size()},
                     {"response_sha256", detail::sha256_hex(response)},
                     {"created_at", detail::now_utc_iso8601()}};
        detail::write_file_atomic(entry_path(key, ".txt"), response);
        detail::write_file_atomic(entry_path(key, ".meta.json"), meta.dump(2) + "\n");
    }

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path entry_path(const CacheKey& key, const char* suffix) const {
        return root_ / key.provider / (key.digest + suffix);
    }

    void warn(const std::string& message) const {
        if (warn_)
            warn_(message);
        else
            std::cerr << "civicsim: warning: " << message << '\n';
    }

    std::filesystem::path root_;
    WarnFn warn_;
};

// ---------------------------------------------------------------------------
// Backends

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    // Returns the response text, or nullopt with `error` describing the failure.
    virtual std::optional<std::string> send(const ProviderHandle& handle,
                                            const std::string& prompt, std::string& error) = 0;
};

// One rule per line of a mock script: {"digest"|"regex": ..., "response": ...}.
// digest matches sha256(prompt); regex is searched anywhere in the prompt.
// First matching rule wins.
struct MockRule {
    std::optional<std::string> digest;
    std::optional<std::string> regex;
    std::string response;
};

inline std::vector<MockRule> load_mock_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script " + path.string());
    std::vector<MockRule> rules;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("response"))
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": mock rule must be an object with a 'response'");
        MockRule rule;
        if (doc.contains("digest")) rule.digest = doc.at("digest").get<std::string>();
        if (doc.contains("regex")) rule.regex = doc.at("regex").get<std::string>();
        if (!rule.digest && !rule.regex)
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": mock rule needs a 'digest' or 'regex' matcher");
        rule.response = doc.at("response").get<std::string>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

class MockBackend : public CompletionBackend {
public:
    explicit MockBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {
        for (const auto& rule : rules_)
            compiled_.emplace_back(rule.regex ? std::optional<std::regex>(std::regex(*rule.regex))
                                              : std::nullopt);
    }

    std::optional<std::string> send(const ProviderHandle&, const std::string& prompt,
                                    std::string& error) override {
        const std::string prompt_digest = detail::sha256_hex(prompt);
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const auto& rule = rules_[i];
            if (rule.digest && *rule.digest == prompt_digest) return rule.response;
            if (compiled_[i] && std::regex_search(prompt, *compiled_[i])) return rule.response;
        }
        error = "no mock rule matched the prompt";
        return std::nullopt;
    }

private:
    std::vector<MockRule> rules_;
    std::vector<std::optional<std::regex>> compiled_;
};

// ---------------------------------------------------------------------------
// HTTP request construction (pure; the transport lives in http.hpp)

struct HttpRequestSpec {
    std::string path;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
};

inline HttpRequestSpec build_http_request(const ProviderHandle& handle, const std::string& prompt,
                                          const std::string& api_key) {
    HttpRequestSpec req;
    json messages = json::array({json{{"role", "user"}, {"content", prompt}}});
    switch (handle.request_shape) {
        case RequestShape::OpenAiStyle: {
            req.path = "/v1/chat/completions";
            req.headers = {{"Authorization", "Bearer " + api_key}};
            json body = {{"model", handle.wire_model()},
                         {"temperature", ProviderHandle::kTemperature},
                         {"messages", messages}};
            if (handle.max_tokens > 0) body["max_tokens"] = handle.max_tokens;
            req.body = body.dump();
            break;
        }
        case RequestShape::AnthropicStyle: {
            req.path = "/v1/messages";
            req.headers = {{"x-api-key", api_key}, {"anthropic-version", "2023-06-01"}};
            json body = {{"model", handle.wire_model()},
                         {"temperature", ProviderHandle::kTemperature},
                         {"max_tokens", handle.max_tokens},
                         {"messages", messages}};
            req.body = body.dump();
            break;
        }
        case RequestShape::Mock:
            throw ConfigError("mock providers have no HTTP request shape");
    }
    return req;
}

inline std::string extract_response_text(RequestShape shape, const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw ProviderError("backend returned non-JSON body");
    try {
        if (shape == RequestShape::OpenAiStyle)
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        if (shape == RequestShape::AnthropicStyle)
            return doc.at("content").at(0).at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw ProviderError(std::string("backend response missing expected fields: ") + e.what());
    }
    throw ConfigError("mock providers have no HTTP response shape");
}

// ---------------------------------------------------------------------------
// Client

namespace detail {

class Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return count_ > 0; });
        --count_;
    }
    void release() {
        std::lock_guard lock(mutex_);
        ++count_;
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int count_;
};

struct SemaphoreGuard {
    Semaphore& s;
    explicit SemaphoreGuard(Semaphore& sem) : s(sem) { s.acquire(); }
    ~SemaphoreGuard() { s.release(); }
};

}  // namespace detail

// Cache-aware completion client with retry/backoff. Safe for concurrent use;
// in-flight backend requests are bounded per provider.
class ProviderClient {
public:
    using SleepFn = std::function<void(double seconds)>;

    ProviderClient(ProviderHandle handle, std::unique_ptr<CompletionBackend> backend,
                   const ResponseCache* cache = nullptr, SleepFn sleep = {},
                   int max_concurrent_requests = 8)
        : handle_(std::move(handle)),
          backend_(std::move(backend)),
          cache_(cache),
          sleep_(std::move(sleep)),
          semaphore_(max_concurrent_requests) {}

    const ProviderHandle& handle() const { return handle_; }
    std::size_t backend_calls() const { return backend_calls_.load(); }

    std::string complete(const std::string& prompt) {
        if (handle_.request_shape != RequestShape::Mock) {
            if (handle_.auth_env.empty())
                throw ConfigError("provider '" + handle_.name + "' has no auth variable configured");
            const char* key = std::getenv(handle_.auth_env.c_str());
            if (key == nullptr || *key == '\0')
                throw ConfigError("environment variable " + handle_.auth_env +
                                  " is not set for provider '" + handle_.name + "'");
        }

        const CacheKey key = CacheKey::of(handle_.name, prompt);
        if (cache_) {
            if (auto hit = cache_->lookup(key)) return *hit;
        }

        // A mock rule miss is permanent, so mocks get a single attempt.
        const int attempts =
            handle_.request_shape == RequestShape::Mock ? 1 : handle_.max_retries + 1;
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) backoff(attempt);
            std::string error;
            std::optional<std::string> response;
            {
                detail::SemaphoreGuard guard(semaphore_);
                backend_calls_.fetch_add(1);
                response = backend_->send(handle_, prompt, error);
            }
            if (response) {
                if (cache_) cache_->store(key, *response);
                return *response;
            }
            last_error = error;
        }
        throw ProviderError("provider '" + handle_.name + "' failed after " +
                            std::to_string(attempts) + " attempt(s): " + last_error);
    }

private:
    void backoff(int attempt) {
        double seconds = 1.0;
        for (int i = 1; i < attempt; ++i) seconds *= 4.0;
        if (sleep_)
            sleep_(seconds);
        else
            std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }

    ProviderHandle handle_;
    std::unique_ptr<CompletionBackend> backend_;
    const ResponseCache* cache_;
    SleepFn sleep_;
    detail::Semaphore semaphore_;
    std::atomic<std::size_t> backend_calls_{0};
};

inline std::unique_ptr<ProviderClient> make_mock_client(const ProviderHandle& handle,
                                                        const ResponseCache* cache = nullptr) {
    if (handle.request_shape != RequestShape::Mock)
        throw ConfigError("make_mock_client requires a mock-shaped provider");
    if (handle.mock_script.empty())
        throw ConfigError("mock provider '" + handle.name + "' has no script configured");
    auto backend = std::make_unique<MockBackend>(load_mock_script(handle.mock_script));
    return std::make_unique<ProviderClient>(handle, std::move(backend), cache);
}

}  // namespace civicsim
