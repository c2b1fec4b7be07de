#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "explaingrade/errors.hpp"
#include "explaingrade/util.hpp"

namespace explaingrade::providers {

using nlohmann::json;

inline constexpr const char* kApiBaseEnv = "EXPLAINGRADE_API_BASE";
inline constexpr const char* kApiKeyEnv = "EXPLAINGRADE_API_KEY";

enum class Role { System, User };

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

struct ChatRequest {
    std::string model_name;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 256;

    void validate() const {
        std::vector<ValidationIssue> issues;
        if (util::trim(model_name).empty()) {
            issues.push_back({0, "malformed-request", "model_name", "model name is empty"});
        }
        if (messages.empty()) {
            issues.push_back({0, "malformed-request", "messages", "at least one message required"});
        }
        for (std::size_t i = 0; i < messages.size(); ++i) {
            if (util::trim(messages[i].content).empty()) {
                issues.push_back({0, "malformed-request", "messages",
                                  "message " + std::to_string(i) + " has empty content"});
            }
        }
        if (temperature < 0.0 || !std::isfinite(temperature)) {
            issues.push_back({0, "malformed-request", "temperature", "must be a finite real >= 0"});
        }
        if (max_tokens < 1) {
            issues.push_back({0, "malformed-request", "max_tokens", "must be a positive integer"});
        }
        if (!issues.empty()) throw ValidationError("invalid chat request", issues);
    }

    json to_json() const {
        json msgs = json::array();
        for (const auto& m : messages) {
            msgs.push_back({{"role", m.role == Role::System ? "system" : "user"},
                            {"content", m.content}});
        }
        return json{{"model", model_name},
                    {"messages", msgs},
                    {"temperature", temperature},
                    {"max_tokens", max_tokens}};
    }
};

struct TokenUsage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    long long total_tokens = 0;
};

struct ChatResponse {
    std::string content;
    std::string finish_reason;
    TokenUsage usage;
    bool replayed = false;  // served from cache, no network traffic
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_name;

    std::size_t dimension() const { return values.size(); }
};

// ---- cache keys ----

struct CacheKey {
    std::string hex;

    bool operator==(const CacheKey&) const = default;

    static CacheKey for_payload(std::string_view endpoint_kind, std::string_view model,
                                std::string_view payload) {
        std::string material;
        material.reserve(endpoint_kind.size() + model.size() + payload.size() + 2);
        material.append(endpoint_kind);
        material.push_back('\n');
        material.append(model);
        material.push_back('\n');
        material.append(payload);
        return CacheKey{util::sha256_hex(material)};
    }
};

inline json embedding_payload(std::string_view model, std::string_view text) {
    return json{{"model", std::string(model)}, {"input", std::string(text)}};
}

inline CacheKey chat_cache_key(const ChatRequest& request) {
    return CacheKey::for_payload("chat", request.model_name, request.to_json().dump());
}

inline CacheKey embedding_cache_key(std::string_view model, std::string_view text) {
    return CacheKey::for_payload("embeddings", model, embedding_payload(model, text).dump());
}

// Canonical bodies stored in the cache. Mock providers that pre-seed a cache
// use these too, so replayed runs are byte-identical to recorded ones.
inline std::string canonical_chat_body(std::string_view content, std::string_view finish_reason,
                                       const TokenUsage& usage) {
    return json{{"content", std::string(content)},
                {"finish_reason", std::string(finish_reason)},
                {"usage",
                 {{"prompt_tokens", usage.prompt_tokens},
                  {"completion_tokens", usage.completion_tokens},
                  {"total_tokens", usage.total_tokens}}}}
        .dump();
}

inline std::string canonical_embedding_body(std::string_view model,
                                            const std::vector<double>& values) {
    return json{{"model", std::string(model)}, {"values", values}}.dump();
}

// ---- response cache ----

/// Directory of content-addressed response bodies plus an append-only
/// manifest. Safe for concurrent use; identical keys always carry identical
/// bodies, so last-writer-wins is harmless.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_ / "objects");
    }

    const std::filesystem::path& directory() const { return dir_; }

    std::optional<std::string> find(const CacheKey& key) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto path = object_path(key.hex);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return util::read_file(path);
    }

    void store(const CacheKey& key, std::string_view kind, std::string_view model,
               std::string_view body) {
        std::lock_guard<std::mutex> lock(mu_);
        auto path = object_path(key.hex);
        bool existed = std::filesystem::exists(path);
        util::atomic_write_file(path, body);
        if (!existed) {
            json entry = {{"key", key.hex}, {"kind", std::string(kind)},
                          {"model", std::string(model)}};
            std::ofstream manifest(dir_ / "manifest.jsonl", std::ios::app);
            manifest << entry.dump() << "\n";
        }
    }

    std::size_t size() const { return manifest_entries().size(); }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [key, meta] : manifest_entries()) out.push_back(key);
        return out;
    }

    /// Digest over every (key, body) pair in sorted key order; two caches with
    /// the same digest replay identically.
    std::string content_digest() const {
        std::string material;
        for (const auto& [key, meta] : manifest_entries()) {
            material += key;
            material += "\n";
            material += util::read_file(object_path(key));
            material += "\n";
        }
        return util::sha256_hex(material);
    }

    void export_archive(const std::filesystem::path& file) const {
        auto entries = manifest_entries();
        std::string out;
        out += json{{"format", "explaingrade-cache"}, {"version", 1},
                    {"entries", entries.size()}}
                   .dump();
        out += "\n";
        for (const auto& [key, meta] : entries) {
            std::string body = util::read_file(object_path(key));
            json line = {{"key", key},
                         {"kind", meta.first},
                         {"model", meta.second},
                         {"body", body},
                         {"digest", entry_digest(key, body)}};
            out += line.dump();
            out += "\n";
        }
        util::atomic_write_file(file, out);
    }

    void import_archive(const std::filesystem::path& file) {
        std::string content = util::read_file(file);
        bool saw_header = false;
        std::size_t declared = 0;
        std::size_t imported = 0;
        std::vector<std::tuple<std::string, std::string, std::string, std::string>> staged;
        util::for_each_line(content, [&](std::size_t row, const std::string& line) {
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.is_object()) {
                throw CorruptArchiveError("archive line " + std::to_string(row) +
                                          " is not valid JSON");
            }
            if (!saw_header) {
                if (obj.value("format", "") != "explaingrade-cache") {
                    throw CorruptArchiveError("archive header missing or unrecognized");
                }
                declared = obj.value("entries", std::size_t{0});
                saw_header = true;
                return;
            }
            if (!obj.contains("key") || !obj.contains("body") || !obj.contains("digest")) {
                throw CorruptArchiveError("archive line " + std::to_string(row) +
                                          " is missing fields");
            }
            std::string key = obj["key"].get<std::string>();
            std::string body = obj["body"].get<std::string>();
            std::string digest = obj["digest"].get<std::string>();
            if (digest != entry_digest(key, body)) {
                throw CorruptArchiveError("digest mismatch for entry '" + key + "'");
            }
            staged.emplace_back(key, obj.value("kind", "unknown"), obj.value("model", ""), body);
            ++imported;
        });
        if (!saw_header) throw CorruptArchiveError("archive is empty (no header)");
        if (imported != declared) {
            throw CorruptArchiveError("archive declares " + std::to_string(declared) +
                                      " entries but contains " + std::to_string(imported));
        }
        for (const auto& [key, kind, model, body] : staged) {
            store(CacheKey{key}, kind, model, body);
        }
    }

private:
    static std::string entry_digest(std::string_view key, std::string_view body) {
        std::string material(key);
        material += "\n";
        material += body;
        return util::sha256_hex(material);
    }

    std::filesystem::path object_path(std::string_view key_hex) const {
        return dir_ / "objects" / std::string(key_hex);
    }

    // key -> (kind, model), sorted by key
    std::map<std::string, std::pair<std::string, std::string>> manifest_entries() const {
        std::map<std::string, std::pair<std::string, std::string>> out;
        auto manifest = dir_ / "manifest.jsonl";
        if (!std::filesystem::exists(manifest)) return out;
        std::string content = util::read_file(manifest);
        util::for_each_line(content, [&](std::size_t, const std::string& line) {
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.contains("key")) return;
            out[obj["key"].get<std::string>()] = {obj.value("kind", "unknown"),
                                                  obj.value("model", "")};
        });
        return out;
    }

    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

// ---- HTTP transport ----

struct HttpResult {
    bool transport_ok = false;  // false: connection-level failure
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
    std::string transport_error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResult post(const std::string& path, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(const std::string& base_url) {
        auto scheme_end = base_url.find("://");
        std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = base_url.find('/', host_start);
        if (path_start == std::string::npos) {
            origin_ = base_url;
        } else {
            origin_ = base_url.substr(0, path_start);
            prefix_ = base_url.substr(path_start);
            while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        }
    }

    HttpResult post(const std::string& path, const std::string& body,
                    const std::vector<std::pair<std::string, std::string>>& headers) override {
        // A fresh client per call sidesteps httplib's connection-reuse
        // thread-safety caveats.
        httplib::Client client(origin_);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers hdrs;
        for (const auto& [k, v] : headers) hdrs.emplace(k, v);
        auto res = client.Post(prefix_ + path, hdrs, body, "application/json");
        HttpResult out;
        if (!res) {
            out.transport_error = httplib::to_string(res.error());
            return out;
        }
        out.transport_ok = true;
        out.status = res->status;
        out.body = res->body;
        for (const auto& [k, v] : res->headers) out.headers[k] = v;
        return out;
    }

private:
    std::string origin_;
    std::string prefix_;
};

// ---- retry policy + shared endpoint core ----

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double factor = 2.0;
    bool jitter = true;
};

struct ProviderConfig {
    std::string api_base;
    std::string api_key;
    RetryPolicy retry;
    std::size_t parallelism = 4;  // max in-flight requests
    bool offline = false;
};

inline ProviderConfig config_from_env() {
    ProviderConfig cfg;
    if (const char* base = std::getenv(kApiBaseEnv)) cfg.api_base = base;
    if (const char* key = std::getenv(kApiKeyEnv)) cfg.api_key = key;
    return cfg;
}

struct CallStats {
    int http_attempts = 0;
    std::vector<std::chrono::milliseconds> backoff_delays;
    bool from_cache = false;
};

namespace detail {

class InflightLimiter {
public:
    explicit InflightLimiter(std::size_t limit)
        : sem_(static_cast<std::ptrdiff_t>(limit == 0 ? 1 : limit)) {}

    class Guard {
    public:
        explicit Guard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
        ~Guard() { sem_.release(); }
        Guard(const Guard&) = delete;
        Guard& operator=(const Guard&) = delete;

    private:
        std::counting_semaphore<>& sem_;
    };

    Guard guard() { return Guard(sem_); }

private:
    std::counting_semaphore<> sem_;
};

}  // namespace detail

/// Shared request core: cache lookup, bounded-parallel POST with exponential
/// backoff, canonical-body store.
class Endpoint {
public:
    Endpoint(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
             ResponseCache* cache)
        : config_(std::move(config)),
          transport_(std::move(transport)),
          cache_(cache),
          limiter_(config_.parallelism),
          rng_(std::random_device{}()) {}

    const ProviderConfig& config() const { return config_; }
    ResponseCache* cache() const { return cache_; }

    std::vector<CallStats> stats_log() const {
        std::lock_guard<std::mutex> lock(stats_mu_);
        return stats_log_;
    }

    void clear_stats() {
        std::lock_guard<std::mutex> lock(stats_mu_);
        stats_log_.clear();
    }

    // Returns (stored canonical body, replayed flag). `parse_wire` converts a
    // 200 wire body into the canonical form that gets cached.
    std::pair<std::string, bool> cached_post(
        std::string_view kind, std::string_view model, const json& payload,
        const std::string& path,
        const std::function<std::string(const std::string&)>& parse_wire) {
        CacheKey key = CacheKey::for_payload(kind, model, payload.dump());
        if (cache_) {
            if (auto hit = cache_->find(key)) {
                CallStats stats;
                stats.from_cache = true;
                log_stats(stats);
                return {*hit, true};
            }
        }
        if (config_.offline) {
            throw CacheMissOfflineError("offline mode: no cached response for " +
                                        std::string(kind) + " request (key " + key.hex + ")");
        }
        if (util::trim(config_.api_key).empty()) {
            throw MissingCredentialError(std::string("no API credential configured; set ") +
                                         kApiKeyEnv + " or provide a config file");
        }
        std::string wire = post_with_retries(path, payload.dump());
        std::string body = parse_wire(wire);
        if (cache_) cache_->store(key, kind, model, body);
        return {body, false};
    }

private:
    std::string post_with_retries(const std::string& path, const std::string& payload) {
        CallStats stats;
        std::vector<std::pair<std::string, std::string>> headers = {
            {"Authorization", "Bearer " + config_.api_key}};
        const auto& policy = config_.retry;
        int attempts = std::max(policy.max_attempts, 1);
        std::string last_error;
        long last_retry_after = 0;
        bool rate_limited = false;
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            if (attempt > 1) {
                auto delay = backoff_delay(attempt - 1, last_retry_after);
                stats.backoff_delays.push_back(delay);
                std::this_thread::sleep_for(delay);
            }
            HttpResult res;
            {
                auto guard = limiter_.guard();
                ++stats.http_attempts;
                res = transport_->post(path, payload, headers);
            }
            if (!res.transport_ok) {
                last_error = "transport failure: " + res.transport_error;
                rate_limited = false;
                continue;
            }
            if (res.status == 200) {
                log_stats(stats);
                return res.body;
            }
            if (res.status == 429) {
                rate_limited = true;
                last_retry_after = parse_retry_after(res.headers);
                last_error = "rate limited (429)";
                continue;
            }
            if (res.status >= 500) {
                rate_limited = false;
                last_error = "server error (status " + std::to_string(res.status) + ")";
                continue;
            }
            log_stats(stats);
            throw NonSuccessStatusError("endpoint returned status " + std::to_string(res.status) +
                                            ": " + res.body.substr(0, 200),
                                        res.status);
        }
        log_stats(stats);
        if (rate_limited) {
            throw RateLimitedError("rate limited after " + std::to_string(attempts) +
                                       " attempts (retry-after " +
                                       std::to_string(last_retry_after) + "s)",
                                   last_retry_after);
        }
        if (last_error.rfind("server error", 0) == 0) {
            throw NonSuccessStatusError(last_error + " after " + std::to_string(attempts) +
                                            " attempts",
                                        0);
        }
        throw TransportError(last_error + " after " + std::to_string(attempts) + " attempts");
    }

    std::chrono::milliseconds backoff_delay(int retry_index, long retry_after_seconds) {
        double scale = std::pow(config_.retry.factor, retry_index - 1);
        auto base = std::chrono::duration_cast<std::chrono::milliseconds>(
            config_.retry.base_delay * scale);
        if (config_.retry.jitter) {
            std::lock_guard<std::mutex> lock(rng_mu_);
            auto extra = std::chrono::milliseconds(
                static_cast<long long>(util::unit_draw(rng_) * 0.5 *
                                       static_cast<double>(base.count())));
            base += extra;
        }
        auto floor = std::chrono::milliseconds(retry_after_seconds * 1000);
        return std::max(base, floor);
    }

    static long parse_retry_after(const std::map<std::string, std::string>& headers) {
        for (const auto& [k, v] : headers) {
            if (util::to_lower(k) == "retry-after") {
                try {
                    return std::stol(v);
                } catch (const std::exception&) {
                    return 0;
                }
            }
        }
        return 0;
    }

    void log_stats(const CallStats& stats) {
        std::lock_guard<std::mutex> lock(stats_mu_);
        stats_log_.push_back(stats);
    }

    ProviderConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    ResponseCache* cache_;
    detail::InflightLimiter limiter_;
    std::mt19937_64 rng_;
    std::mutex rng_mu_;
    mutable std::mutex stats_mu_;
    std::vector<CallStats> stats_log_;
};

// ---- provider interfaces ----

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual const std::string& model_name() const = 0;
};

// ---- chat client ----

class ChatClient : public ChatProvider {
public:
    ChatClient(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
               ResponseCache* cache = nullptr)
        : endpoint_(std::move(config), std::move(transport), cache) {}

    ChatResponse complete(const ChatRequest& request) override {
        request.validate();
        auto [body, replayed] = endpoint_.cached_post(
            "chat", request.model_name, request.to_json(), "/chat/completions",
            [](const std::string& wire) { return parse_wire(wire); });
        ChatResponse response = from_canonical(body);
        response.replayed = replayed;
        if (util::trim(response.content).empty()) {
            throw EmptyCompletionError("endpoint returned an empty completion (finish_reason '" +
                                       response.finish_reason + "')");
        }
        return response;
    }

    Endpoint& endpoint() { return endpoint_; }

private:
    static std::string parse_wire(const std::string& wire) {
        json obj = json::parse(wire, nullptr, false);
        if (obj.is_discarded() || !obj.contains("choices") || !obj["choices"].is_array() ||
            obj["choices"].empty()) {
            throw TransportError("malformed completion payload: " + wire.substr(0, 200));
        }
        const json& choice = obj["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content")) {
            throw TransportError("completion choice has no message content");
        }
        TokenUsage usage;
        if (obj.contains("usage") && obj["usage"].is_object()) {
            const json& u = obj["usage"];
            usage.prompt_tokens = u.value("prompt_tokens", 0LL);
            usage.completion_tokens = u.value("completion_tokens", 0LL);
            usage.total_tokens = u.value("total_tokens", 0LL);
        }
        return canonical_chat_body(choice["message"]["content"].get<std::string>(),
                                   choice.value("finish_reason", ""), usage);
    }

    static ChatResponse from_canonical(const std::string& body) {
        json obj = json::parse(body);
        ChatResponse out;
        out.content = obj.value("content", "");
        out.finish_reason = obj.value("finish_reason", "");
        if (obj.contains("usage")) {
            out.usage.prompt_tokens = obj["usage"].value("prompt_tokens", 0LL);
            out.usage.completion_tokens = obj["usage"].value("completion_tokens", 0LL);
            out.usage.total_tokens = obj["usage"].value("total_tokens", 0LL);
        }
        return out;
    }

    Endpoint endpoint_;
};

// ---- embedding client ----

class EmbeddingClient : public EmbeddingProvider {
public:
    EmbeddingClient(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
                    ResponseCache* cache, std::string model_name)
        : endpoint_(std::move(config), std::move(transport), cache),
          model_name_(std::move(model_name)) {}

    const std::string& model_name() const override { return model_name_; }

    EmbeddingVector embed(const std::string& text) override {
        if (util::trim(text).empty()) {
            throw ValidationError("embed_text",
                                  {{0, "malformed-request", "text", "text is empty"}});
        }
        std::string model = model_name_;
        auto [body, replayed] = endpoint_.cached_post(
            "embeddings", model, embedding_payload(model, text), "/embeddings",
            [&model](const std::string& wire) { return parse_wire(wire, model); });
        (void)replayed;
        EmbeddingVector vec = from_canonical(body);
        check_dimension(vec);
        return vec;
    }

    Endpoint& endpoint() { return endpoint_; }

private:
    static std::string parse_wire(const std::string& wire, const std::string& model) {
        json obj = json::parse(wire, nullptr, false);
        if (obj.is_discarded() || !obj.contains("data") || !obj["data"].is_array() ||
            obj["data"].empty() || !obj["data"][0].contains("embedding")) {
            throw TransportError("malformed embedding payload: " + wire.substr(0, 200));
        }
        const json& emb = obj["data"][0]["embedding"];
        if (!emb.is_array() || emb.empty()) {
            throw TransportError("embedding is empty or not an array");
        }
        std::vector<double> values;
        values.reserve(emb.size());
        for (const auto& v : emb) {
            if (!v.is_number()) throw TransportError("embedding contains a non-numeric value");
            double d = v.get<double>();
            if (!std::isfinite(d)) throw TransportError("embedding contains a non-finite value");
            values.push_back(d);
        }
        return canonical_embedding_body(model, values);
    }

    EmbeddingVector from_canonical(const std::string& body) const {
        json obj = json::parse(body);
        EmbeddingVector out;
        out.model_name = obj.value("model", model_name_);
        out.values = obj["values"].get<std::vector<double>>();
        return out;
    }

    void check_dimension(const EmbeddingVector& vec) {
        std::lock_guard<std::mutex> lock(dim_mu_);
        if (expected_dimension_ == 0) {
            expected_dimension_ = vec.dimension();
            return;
        }
        if (vec.dimension() != expected_dimension_) {
            throw DimensionMismatchError(
                "embedding endpoint returned dimension " + std::to_string(vec.dimension()) +
                    " but earlier responses for model '" + model_name_ + "' had dimension " +
                    std::to_string(expected_dimension_),
                ErrorCategory::Provider);
        }
    }

    Endpoint endpoint_;
    std::string model_name_;
    std::mutex dim_mu_;
    std::size_t expected_dimension_ = 0;
};

}  // namespace explaingrade::providers
