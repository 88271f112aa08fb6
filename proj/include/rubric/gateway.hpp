#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric/store.hpp"

namespace rubric {

struct EndpointConfig {
    std::string name;
    std::string base_url;
    std::string model_id;
    std::string api_key_env;
    int max_concurrency = 4;
    double timeout_seconds = 120.0;
    int max_retries = 3;
    int retry_base_ms = 250;  // exponential backoff base; 0 in tests

    void validate() const;
};

struct ImagePart {
    std::string ref;  // file path or URL
};

using UserPart = std::variant<std::string, ImagePart>;

struct ChatRequest {
    std::string endpoint;
    std::string system_prompt;
    std::vector<UserPart> user_parts;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed;

    void validate() const;
};

struct ChatExchange {
    ChatRequest request;
    std::string response_text;
    std::chrono::milliseconds latency{0};
    bool cache_hit = false;
    int attempt_count = 0;
};

// Raw transport behind one endpoint. complete() either returns the response
// text or throws TransportFailure / NonSuccessStatus.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const EndpointConfig& config,
                                 const ChatRequest& request,
                                 const std::string& digest) = 0;
};

// Deterministic fixture-driven endpoint for offline tests. Fixture file is a
// JSON object mapping request digest -> response string or error directive:
//   "text"                                plain response
//   {"fail_times": n, "then": "text"}     transport failures, then success
//   {"status": 503, "body": "..."}        non-success status every attempt
//   {"timeout": true}                     transport failure every attempt
//   {"sequence": ["a", "b"]}              successive responses, last repeats
// A top-level "rules" array ([{"contains": s, "response": directive}, ...])
// is consulted on digest miss, matching against the request text; this lets
// hand-written fixture files avoid digest computation.
class MockBackend : public Backend {
public:
    MockBackend() = default;
    explicit MockBackend(const nlohmann::json& fixtures);
    static std::shared_ptr<MockBackend> from_file(const std::string& path);

    void add(const std::string& digest, nlohmann::json directive);

    std::string complete(const EndpointConfig& config, const ChatRequest& request,
                         const std::string& digest) override;

    // Instrumentation for the concurrency-bound invariant.
    void set_artificial_delay(std::chrono::milliseconds d) { delay_ = d; }
    int max_observed_concurrency() const { return max_concurrent_; }
    int invocation_count() const { return invocations_; }

private:
    nlohmann::json fixtures_ = nlohmann::json::object();
    std::map<std::string, int> attempt_counts_;
    std::chrono::milliseconds delay_{0};
    int in_flight_ = 0;
    int max_concurrent_ = 0;
    int invocations_ = 0;
    std::mutex mutex_;
};

// OpenAI-compatible chat-completions transport (POST {base_url}/chat/completions,
// bearer token from the environment variable named in config).
class HttpBackend : public Backend {
public:
    std::string complete(const EndpointConfig& config, const ChatRequest& request,
                         const std::string& digest) override;
};

struct ChatOptions {
    bool bypass_cache = false;  // fresh sample for parse-failure retries
};

// Stable content hash over (endpoint, model_id, system_prompt, canonical
// user_parts with image bytes hashed, temperature, max_tokens, seed).
std::string request_digest(const ChatRequest& request, const EndpointConfig& config);

std::string pretty_request(const ChatRequest& request);

// Uniform cached, rate-limited access to every configured endpoint.
// Safe for concurrent callers; per-endpoint concurrency bounded by
// EndpointConfig::max_concurrency.
class Gateway {
public:
    explicit Gateway(Store* store = nullptr) : store_(store) {}

    void configure(EndpointConfig config);
    void set_backend(const std::string& endpoint, std::shared_ptr<Backend> backend);
    const EndpointConfig& endpoint(const std::string& name) const;
    bool has_endpoint(const std::string& name) const;

    ChatExchange chat_complete(const ChatRequest& request, ChatOptions options = {});

    std::string digest(const ChatRequest& request) const;

private:
    struct EndpointState {
        EndpointConfig config;
        std::shared_ptr<Backend> backend;
        int in_flight = 0;
        std::mutex mutex;
        std::condition_variable cv;
    };

    EndpointState& state(const std::string& name) const;

    Store* store_;
    mutable std::mutex mutex_;
    std::map<std::string, std::unique_ptr<EndpointState>> endpoints_;
};

// Loads EndpointConfig entries from a JSON config file:
//   {"endpoints": [{"name": ..., "base_url": ..., ...}, ...]}
std::vector<EndpointConfig> load_endpoint_configs(const nlohmann::json& config);

// Resolves an image ref (file path) to bytes. Throws ImageUnreadable.
std::string load_image_bytes(const std::string& ref);

}  // namespace rubric
