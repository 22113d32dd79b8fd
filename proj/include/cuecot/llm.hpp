#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cuecot/prompts.hpp"
#include "cuecot/types.hpp"

namespace cuecot::llm {

struct GenerationParams {
    double temperature = 0.7;
    double top_p = 0.95;
    std::optional<int> max_tokens;
    std::string model = "mock";
    /// Context window in the model's token units.
    int context_limit = 2048;
    /// Characters per token for the length proxy; 0 picks the language
    /// default (4 for en, 1.5 for zh).
    double chars_per_token = 0.0;

    void validate() const;
};

/// Sampling used for response generation: temperature 0.7, top-p 0.95.
GenerationParams generation_params(std::string model, int context_limit);
/// Sampling used for judging: temperature 0.2, top-p 0.1.
GenerationParams evaluation_params(std::string model, int context_limit);

void to_json(json& j, const GenerationParams& p);
void from_json(const json& j, GenerationParams& p);

/// Wire-level request. `tag` names the template that produced the prompt; it
/// is informational and never reaches a remote provider or the cache key.
struct ChatRequest {
    std::string model;
    std::string prompt;
    double temperature = 0.0;
    double top_p = 1.0;
    std::optional<int> max_tokens;
    std::string tag;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the raw completion text. Throws BackendError.
    virtual std::string send(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Thread-safe scripted backend.
class MockBackend : public ChatBackend {
public:
    using Responder = std::function<std::string(const ChatRequest&)>;

    explicit MockBackend(Responder responder, std::string name = "mock");

    /// Always replies with `reply`.
    static std::shared_ptr<MockBackend> constant(std::string reply);
    /// Exact prompt lookup; unmatched prompts get `fallback` or a BackendError.
    static std::shared_ptr<MockBackend> table(std::map<std::string, std::string> replies,
                                              std::optional<std::string> fallback = std::nullopt);
    /// Deterministic stand-in for a real model: answers each template kind
    /// with well-formed text derived from a hash of the prompt.
    static std::shared_ptr<MockBackend> synthetic();
    /// Scripted mock from a JSON description:
    /// {"table": {prompt: reply}, "rules": [{"tag"?, "contains"?, "reply"}], "default": reply}
    static std::shared_ptr<MockBackend> from_json(const json& script);

    std::string send(const ChatRequest& request) override;
    std::string name() const override { return name_; }

    std::size_t calls() const;
    std::vector<ChatRequest> requests() const;

private:
    Responder responder_;
    std::string name_;
    mutable std::mutex mu_;
    std::vector<ChatRequest> log_;
};

struct HttpConfig {
    /// e.g. "https://api.openai.com"
    std::string base_url;
    std::string path = "/v1/chat/completions";
    /// Read from $CUE_API_KEY when empty.
    std::string api_key;
    std::chrono::seconds timeout{120};
};

/// OpenAI-style chat-completion endpoint. Request and response bodies are
/// described in docs/backend.md.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(HttpConfig config);
    std::string send(const ChatRequest& request) override;
    std::string name() const override { return "http:" + config_.base_url; }

    static json request_body(const ChatRequest& request);
    /// Extracts choices[0].message.content. Throws BackendError on refusals
    /// or empty bodies.
    static std::string parse_response(int status, std::string_view body);

private:
    HttpConfig config_;
};

/// Hex SHA-256 over the canonical JSON serialization of the request inputs.
std::string cache_key(std::string_view model, const GenerationParams& params,
                      std::string_view prompt_text);

class CompletionCache {
public:
    virtual ~CompletionCache() = default;
    virtual std::optional<std::string> get(const std::string& digest) = 0;
    /// `record` holds the completion under "completion" plus request metadata.
    virtual void put(const std::string& digest, const json& record) = 0;
};

class MemoryCache : public CompletionCache {
public:
    std::optional<std::string> get(const std::string& digest) override;
    void put(const std::string& digest, const json& record) override;

private:
    std::mutex mu_;
    std::map<std::string, std::string> entries_;
};

/// One JSON file per digest: `<dir>/<digest>.json`, written via temp + rename.
class DiskCache : public CompletionCache {
public:
    explicit DiskCache(std::filesystem::path dir);
    std::optional<std::string> get(const std::string& digest) override;
    void put(const std::string& digest, const json& record) override;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
};

struct Completion {
    std::string text;
    bool cached = false;
    std::int64_t latency_ms = 0;
    std::string request_digest;
};

/// Caching, retrying, concurrency-bounded front end over a ChatBackend.
class LlmClient {
public:
    explicit LlmClient(std::shared_ptr<ChatBackend> backend,
                       std::shared_ptr<CompletionCache> cache = std::make_shared<MemoryCache>(),
                       RetryPolicy retry = {}, int max_in_flight = 4);

    Completion complete(const prompts::RenderedPrompt& prompt, const GenerationParams& params);
    Completion complete(std::string_view prompt_text, const GenerationParams& params,
                        std::string_view tag = {});

    /// complete() invocations, cached or not.
    std::size_t calls() const { return calls_.load(); }
    /// Requests that reached the backend, counting retries.
    std::size_t backend_requests() const { return backend_requests_.load(); }

    ChatBackend& backend() { return *backend_; }

private:
    void acquire();
    void release();

    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<CompletionCache> cache_;
    RetryPolicy retry_;
    int max_in_flight_;
    int in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> backend_requests_{0};
};

}  // namespace cuecot::llm
