#include "rubric/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "rubric/errors.hpp"
#include "rubric/util.hpp"

namespace rubric {

void EndpointConfig::validate() const {
    if (name.empty()) throw SchemaViolation("endpoint name must be non-empty");
    if (max_concurrency < 1) throw SchemaViolation("max_concurrency must be >= 1");
    if (timeout_seconds <= 0) throw SchemaViolation("timeout must be > 0");
    if (max_retries < 0) throw SchemaViolation("max_retries must be >= 0");
}

void ChatRequest::validate() const {
    if (user_parts.empty()) throw SchemaViolation("user_parts must be non-empty");
    int images = 0;
    for (const auto& part : user_parts) {
        if (std::holds_alternative<ImagePart>(part)) ++images;
    }
    if (images > 1) throw SchemaViolation("at most one image part per request");
    if (temperature < 0) throw SchemaViolation("temperature must be >= 0");
    if (max_tokens <= 0) throw SchemaViolation("max_tokens must be positive");
}

std::string load_image_bytes(const std::string& ref) {
    if (!std::filesystem::exists(ref)) {
        throw ImageUnreadable("image '" + ref + "' does not exist");
    }
    try {
        return read_file(ref);
    } catch (const IoFailure& e) {
        throw ImageUnreadable(e.what());
    }
}

std::string request_digest(const ChatRequest& request, const EndpointConfig& config) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& part : request.user_parts) {
        if (const auto* text = std::get_if<std::string>(&part)) {
            parts.push_back({{"text", *text}});
        } else {
            const auto& image = std::get<ImagePart>(part);
            parts.push_back({{"image_sha256", sha256_hex(load_image_bytes(image.ref))}});
        }
    }
    nlohmann::json canonical = {
        {"endpoint", request.endpoint},
        {"model_id", config.model_id},
        {"system_prompt", request.system_prompt},
        {"user_parts", parts},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"seed", request.seed ? nlohmann::json(*request.seed) : nlohmann::json()},
    };
    return sha256_hex(canonical.dump());
}

std::string pretty_request(const ChatRequest& request) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& part : request.user_parts) {
        if (const auto* text = std::get_if<std::string>(&part)) {
            parts.push_back({{"text", *text}});
        } else {
            parts.push_back({{"image", std::get<ImagePart>(part).ref}});
        }
    }
    nlohmann::json j = {
        {"endpoint", request.endpoint},
        {"system_prompt", request.system_prompt},
        {"user_parts", parts},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"seed", request.seed ? nlohmann::json(*request.seed) : nlohmann::json()},
    };
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(const nlohmann::json& fixtures) {
    if (!fixtures.is_object()) {
        throw FixtureMalformed("fixture file must be a JSON object keyed by digest");
    }
    for (const auto& [digest, directive] : fixtures.items()) {
        if (digest == "rules") {
            if (!directive.is_array()) {
                throw FixtureMalformed("'rules' must be an array of match rules");
            }
            fixtures_[digest] = directive;
            continue;
        }
        if (!directive.is_string() && !directive.is_object()) {
            throw FixtureMalformed("fixture for digest " + digest +
                                   " must be a string or directive object");
        }
        fixtures_[digest] = directive;
    }
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FixtureMalformed(std::string("fixture file does not parse: ") + e.what());
    }
    return std::make_shared<MockBackend>(j);
}

void MockBackend::add(const std::string& digest, nlohmann::json directive) {
    std::lock_guard<std::mutex> lock(mutex_);
    fixtures_[digest] = std::move(directive);
}

std::string MockBackend::complete(const EndpointConfig&, const ChatRequest& request,
                                  const std::string& digest) {
    nlohmann::json directive;
    int attempt;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++invocations_;
        ++in_flight_;
        if (in_flight_ > max_concurrent_) max_concurrent_ = in_flight_;
        if (fixtures_.contains(digest)) {
            directive = fixtures_[digest];
        } else if (fixtures_.contains("rules")) {
            std::string haystack = request.system_prompt;
            for (const auto& part : request.user_parts) {
                if (const auto* text = std::get_if<std::string>(&part)) {
                    haystack += '\n' + *text;
                }
            }
            for (const auto& rule : fixtures_["rules"]) {
                if (haystack.find(rule.at("contains").get<std::string>()) !=
                    std::string::npos) {
                    directive = rule.at("response");
                    break;
                }
            }
        }
        if (directive.is_null()) {
            --in_flight_;
            throw FixtureMissing("no fixture for digest " + digest +
                                 "; request was:\n" + pretty_request(request));
        }
        attempt = attempt_counts_[digest]++;
    }
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    struct Exit {
        MockBackend* self;
        ~Exit() {
            std::lock_guard<std::mutex> lock(self->mutex_);
            --self->in_flight_;
        }
    } exit_guard{this};

    if (directive.is_string()) return directive.get<std::string>();
    if (directive.contains("timeout")) {
        throw TransportFailure("mock timeout for digest " + digest);
    }
    if (directive.contains("status")) {
        throw NonSuccessStatus(directive["status"].get<int>(),
                               directive.value("body", std::string{}));
    }
    if (directive.contains("fail_times")) {
        if (attempt < directive["fail_times"].get<int>()) {
            throw TransportFailure("mock transient failure " + std::to_string(attempt + 1) +
                                   " for digest " + digest);
        }
        return directive.at("then").get<std::string>();
    }
    if (directive.contains("sequence")) {
        const auto& seq = directive["sequence"];
        if (!seq.is_array() || seq.empty()) {
            throw FixtureMalformed("sequence directive must be a non-empty array");
        }
        const int idx = std::min<int>(attempt, static_cast<int>(seq.size()) - 1);
        return seq[idx].get<std::string>();
    }
    throw FixtureMalformed("unrecognized directive for digest " + digest);
}

// ---------------------------------------------------------------------------
// HttpBackend

std::string HttpBackend::complete(const EndpointConfig& config,
                                  const ChatRequest& request, const std::string&) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& part : request.user_parts) {
        if (const auto* text = std::get_if<std::string>(&part)) {
            content.push_back({{"type", "text"}, {"text", *text}});
        } else {
            const auto& image = std::get<ImagePart>(part);
            const std::string bytes = load_image_bytes(image.ref);
            std::string mime = "image/png";
            if (image.ref.ends_with(".jpg") || image.ref.ends_with(".jpeg")) {
                mime = "image/jpeg";
            }
            content.push_back(
                {{"type", "image_url"},
                 {"image_url",
                  {{"url", "data:" + mime + ";base64," + base64_encode(bytes)}}}});
        }
    }
    nlohmann::json body = {
        {"model", config.model_id},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                {{"role", "user"}, {"content", content}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    if (request.seed) body["seed"] = *request.seed;

    httplib::Client client(config.base_url);
    client.set_connection_timeout(std::chrono::duration<double>(config.timeout_seconds));
    client.set_read_timeout(std::chrono::duration<double>(config.timeout_seconds));
    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    auto result = client.Post("/chat/completions", headers, body.dump(),
                              "application/json");
    if (!result) {
        throw TransportFailure("request to " + config.base_url +
                               " failed: " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw NonSuccessStatus(result->status, result->body);
    }
    nlohmann::json response;
    try {
        response = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportFailure(std::string("unparseable response body: ") + e.what());
    }
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportFailure(std::string("unexpected response shape: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Gateway

void Gateway::configure(EndpointConfig config) {
    config.validate();
    std::lock_guard<std::mutex> lock(mutex_);
    auto st = std::make_unique<EndpointState>();
    st->config = std::move(config);
    st->backend = std::make_shared<HttpBackend>();
    endpoints_[st->config.name] = std::move(st);
}

void Gateway::set_backend(const std::string& endpoint, std::shared_ptr<Backend> backend) {
    state(endpoint).backend = std::move(backend);
}

Gateway::EndpointState& Gateway::state(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = endpoints_.find(name);
    if (it == endpoints_.end()) {
        throw EndpointUnknown("endpoint '" + name + "' is not configured");
    }
    return *it->second;
}

const EndpointConfig& Gateway::endpoint(const std::string& name) const {
    return state(name).config;
}

bool Gateway::has_endpoint(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return endpoints_.contains(name);
}

std::string Gateway::digest(const ChatRequest& request) const {
    return request_digest(request, state(request.endpoint).config);
}

namespace {

bool retryable(const std::exception& e) {
    if (dynamic_cast<const TransportFailure*>(&e)) return true;
    if (const auto* status = dynamic_cast<const NonSuccessStatus*>(&e)) {
        return status->status == 429 || status->status >= 500;
    }
    return false;
}

}  // namespace

ChatExchange Gateway::chat_complete(const ChatRequest& request, ChatOptions options) {
    request.validate();
    EndpointState& st = state(request.endpoint);
    const EndpointConfig& config = st.config;
    const std::string digest = request_digest(request, config);

    const auto started = std::chrono::steady_clock::now();
    ChatExchange exchange;
    exchange.request = request;

    if (store_ && !options.bypass_cache) {
        if (auto cached = store_->cache_get(digest)) {
            exchange.response_text = *cached;
            exchange.cache_hit = true;
            exchange.attempt_count = 0;
            exchange.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            return exchange;
        }
    }

    {
        std::unique_lock<std::mutex> lock(st.mutex);
        st.cv.wait(lock, [&] { return st.in_flight < config.max_concurrency; });
        ++st.in_flight;
    }
    struct Release {
        EndpointState& st;
        ~Release() {
            {
                std::lock_guard<std::mutex> lock(st.mutex);
                --st.in_flight;
            }
            st.cv.notify_one();
        }
    } release{st};

    std::mt19937_64 jitter_rng{std::random_device{}()};
    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0 && config.retry_base_ms > 0) {
            const double base = config.retry_base_ms * std::pow(2.0, attempt - 1);
            std::uniform_real_distribution<double> jitter(0.5, 1.5);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<int>(base * jitter(jitter_rng))));
        }
        try {
            exchange.response_text = st.backend->complete(config, request, digest);
            exchange.attempt_count = attempt + 1;
            exchange.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            if (store_) store_->cache_put(digest, exchange.response_text, config.name);
            return exchange;
        } catch (const std::exception& e) {
            if (!retryable(e)) throw;
            last_error = e.what();
        }
    }
    throw TransportFailure("endpoint '" + config.name + "' failed after " +
                           std::to_string(config.max_retries + 1) +
                           " attempts; last error: " + last_error);
}

std::vector<EndpointConfig> load_endpoint_configs(const nlohmann::json& config) {
    std::vector<EndpointConfig> out;
    if (!config.contains("endpoints") || !config["endpoints"].is_array()) {
        throw SchemaViolation("config requires an 'endpoints' array");
    }
    for (const auto& e : config["endpoints"]) {
        EndpointConfig ec;
        ec.name = e.at("name").get<std::string>();
        ec.base_url = e.value("base_url", std::string{});
        ec.model_id = e.value("model_id", std::string{});
        ec.api_key_env = e.value("api_key_env", std::string{});
        ec.max_concurrency = e.value("max_concurrency", 4);
        ec.timeout_seconds = e.value("timeout", 120.0);
        ec.max_retries = e.value("max_retries", 3);
        ec.retry_base_ms = e.value("retry_base_ms", 250);
        ec.validate();
        out.push_back(std::move(ec));
    }
    return out;
}

}  // namespace rubric
