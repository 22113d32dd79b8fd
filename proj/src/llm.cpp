#include "cuecot/llm.hpp"

#include "cuecot/error.hpp"
#include "cuecot/text.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace cuecot::llm {

void GenerationParams::validate() const {
    if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
    if (context_limit <= 0) throw ValidationError("context_limit must be positive");
    if (max_tokens && *max_tokens <= 0) throw ValidationError("max_tokens must be positive");
    if (chars_per_token < 0.0) throw ValidationError("chars_per_token must be >= 0");
}

GenerationParams generation_params(std::string model, int context_limit) {
    GenerationParams p;
    p.temperature = 0.7;
    p.top_p = 0.95;
    p.model = std::move(model);
    p.context_limit = context_limit;
    return p;
}

GenerationParams evaluation_params(std::string model, int context_limit) {
    GenerationParams p;
    p.temperature = 0.2;
    p.top_p = 0.1;
    p.model = std::move(model);
    p.context_limit = context_limit;
    return p;
}

void to_json(json& j, const GenerationParams& p) {
    j = json{{"temperature", p.temperature},
             {"top_p", p.top_p},
             {"model", p.model},
             {"context_limit", p.context_limit},
             {"chars_per_token", p.chars_per_token},
             {"max_tokens", p.max_tokens ? json(*p.max_tokens) : json(nullptr)}};
}

void from_json(const json& j, GenerationParams& p) {
    p.temperature = j.at("temperature").get<double>();
    p.top_p = j.at("top_p").get<double>();
    p.model = j.at("model").get<std::string>();
    p.context_limit = j.at("context_limit").get<int>();
    p.chars_per_token = j.value("chars_per_token", 0.0);
    if (auto it = j.find("max_tokens"); it != j.end() && !it->is_null()) {
        p.max_tokens = it->get<int>();
    } else {
        p.max_tokens.reset();
    }
}

// ---------------------------------------------------------------------------
// Mock

MockBackend::MockBackend(Responder responder, std::string name)
    : responder_(std::move(responder)), name_(std::move(name)) {}

std::shared_ptr<MockBackend> MockBackend::constant(std::string reply) {
    return std::make_shared<MockBackend>(
        [reply = std::move(reply)](const ChatRequest&) { return reply; }, "mock:constant");
}

std::shared_ptr<MockBackend> MockBackend::table(std::map<std::string, std::string> replies,
                                                std::optional<std::string> fallback) {
    return std::make_shared<MockBackend>(
        [replies = std::move(replies), fallback = std::move(fallback)](const ChatRequest& r) {
            if (auto it = replies.find(r.prompt); it != replies.end()) return it->second;
            if (fallback) return *fallback;
            throw BackendError("mock has no reply for prompt", false);
        },
        "mock:table");
}

namespace {

std::string pick(std::uint64_t h, std::initializer_list<const char*> options) {
    auto idx = h % options.size();
    return *(options.begin() + idx);
}

std::string synthetic_reply(const ChatRequest& r) {
    const std::uint64_t h = text::fnv1a(r.prompt);
    const std::string trait = pick(h, {"anxious", "curious", "cautious", "optimistic",
                                       "frustrated", "thoughtful", "lonely", "confident"});
    const std::string need = pick(h >> 8, {"reassurance", "practical advice", "encouragement",
                                           "detailed information", "someone to listen"});
    const std::string status = "The user appears " + trait + " and is looking for " + need + ".";
    char digest[17];
    std::snprintf(digest, sizeof(digest), "%016llx", static_cast<unsigned long long>(h));
    const std::string response = "I hear you. Here is something that may help (" +
                                 std::string(digest, 8) + "): take it one step at a time.";
    if (r.tag == "m_cue_status") return status;
    if (r.tag == "o_cue") return status + "\n\n" + response;
    if (r.tag == "m_cue_planning") {
        return "The system should offer " + need + " in a tone that suits a " + trait + " user.";
    }
    if (r.tag == "judge_helpfulness" || r.tag == "judge_acceptability") {
        const int a = 50 + static_cast<int>(h % 50);
        const int b = 50 + static_cast<int>((h >> 16) % 50);
        char line[64];
        std::snprintf(line, sizeof(line), "%d.%d %d.%d", a / 10, a % 10, b / 10, b % 10);
        return std::string(line) + "\nBoth responses address the user; scores reflect detail.";
    }
    if (r.tag == "persona_infer") return trait + ", seeking " + need;
    if (r.tag == "dialogue_continue") {
        return "[Human] Could you say a bit more about that?\n[AI] " + response;
    }
    return response;
}

}  // namespace

std::shared_ptr<MockBackend> MockBackend::synthetic() {
    return std::make_shared<MockBackend>(synthetic_reply, "mock:synthetic");
}

std::shared_ptr<MockBackend> MockBackend::from_json(const json& script) {
    struct Rule {
        std::optional<std::string> tag;
        std::optional<std::string> contains;
        std::string reply;
    };
    std::map<std::string, std::string> table;
    if (auto it = script.find("table"); it != script.end()) {
        table = it->get<std::map<std::string, std::string>>();
    }
    std::vector<Rule> rules;
    if (auto it = script.find("rules"); it != script.end()) {
        for (const auto& r : *it) {
            Rule rule;
            if (r.contains("tag")) rule.tag = r.at("tag").get<std::string>();
            if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
            rule.reply = r.at("reply").get<std::string>();
            rules.push_back(std::move(rule));
        }
    }
    std::optional<std::string> fallback;
    if (auto it = script.find("default"); it != script.end()) fallback = it->get<std::string>();
    const bool synthetic_fallback = script.value("synthetic_default", false);
    return std::make_shared<MockBackend>(
        [table, rules, fallback, synthetic_fallback](const ChatRequest& r) {
            if (auto it = table.find(r.prompt); it != table.end()) return it->second;
            for (const auto& rule : rules) {
                if (rule.tag && *rule.tag != r.tag) continue;
                if (rule.contains && r.prompt.find(*rule.contains) == std::string::npos) continue;
                return rule.reply;
            }
            if (fallback) return *fallback;
            if (synthetic_fallback) return synthetic_reply(r);
            throw BackendError("scripted mock has no reply for this prompt", false);
        },
        "mock:scripted");
}

std::string MockBackend::send(const ChatRequest& request) {
    {
        std::lock_guard lock(mu_);
        log_.push_back(request);
    }
    return responder_(request);
}

std::size_t MockBackend::calls() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

std::vector<ChatRequest> MockBackend::requests() const {
    std::lock_guard lock(mu_);
    return log_;
}

// ---------------------------------------------------------------------------
// Cache

std::string cache_key(std::string_view model, const GenerationParams& params,
                      std::string_view prompt_text) {
    json canonical = {
        {"model", std::string(model)},
        {"temperature", params.temperature},
        {"top_p", params.top_p},
        {"max_tokens", params.max_tokens ? json(*params.max_tokens) : json(nullptr)},
        {"prompt", std::string(prompt_text)},
    };
    return text::sha256_hex(canonical.dump());
}

std::optional<std::string> MemoryCache::get(const std::string& digest) {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(digest); it != entries_.end()) return it->second;
    return std::nullopt;
}

void MemoryCache::put(const std::string& digest, const json& record) {
    std::lock_guard lock(mu_);
    entries_[digest] = record.at("completion").get<std::string>();
}

DiskCache::DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::optional<std::string> DiskCache::get(const std::string& digest) {
    auto path = dir_ / (digest + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
        json record = json::parse(in);
        return record.at("completion").get<std::string>();
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void DiskCache::put(const std::string& digest, const json& record) {
    auto final_path = dir_ / (digest + ".json");
    std::ostringstream tid;
    tid << std::this_thread::get_id();
    auto tmp_path = dir_ / (digest + ".json.tmp." + tid.str());
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write cache file " + tmp_path.string());
        out << record.dump(2) << '\n';
    }
    std::filesystem::rename(tmp_path, final_path);
}

// ---------------------------------------------------------------------------
// Client

LlmClient::LlmClient(std::shared_ptr<ChatBackend> backend, std::shared_ptr<CompletionCache> cache,
                     RetryPolicy retry, int max_in_flight)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      retry_(retry),
      max_in_flight_(max_in_flight < 1 ? 1 : max_in_flight) {
    if (!backend_) throw ValidationError("LlmClient needs a backend");
    if (!cache_) cache_ = std::make_shared<MemoryCache>();
    if (retry_.attempts < 1) retry_.attempts = 1;
}

void LlmClient::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
}

void LlmClient::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

Completion LlmClient::complete(const prompts::RenderedPrompt& prompt,
                               const GenerationParams& params) {
    return complete(prompt.text, params, prompts::to_string(prompt.template_id));
}

Completion LlmClient::complete(std::string_view prompt_text, const GenerationParams& params,
                               std::string_view tag) {
    params.validate();
    ++calls_;
    Completion out;
    out.request_digest = cache_key(params.model, params, prompt_text);
    if (auto hit = cache_->get(out.request_digest)) {
        out.text = std::move(*hit);
        out.cached = true;
        return out;
    }

    ChatRequest request{params.model, std::string(prompt_text), params.temperature,
                        params.top_p, params.max_tokens, std::string(tag)};
    const auto start = std::chrono::steady_clock::now();
    auto backoff = retry_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
        std::string reply;
        bool ok = false;
        acquire();
        try {
            ++backend_requests_;
            reply = backend_->send(request);
            ok = true;
        } catch (const BackendError& e) {
            release();
            if (!e.retryable()) throw;
            last_error = e.what();
        } catch (const std::exception& e) {
            release();
            last_error = e.what();
        }
        if (ok) {
            release();
            if (text::is_blank(reply)) throw BackendError("provider returned an empty completion", false);
            out.text = std::move(reply);
            out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
            json params_json = params;
            cache_->put(out.request_digest, json{{"digest", out.request_digest},
                                                 {"model", params.model},
                                                 {"params", params_json},
                                                 {"tag", std::string(tag)},
                                                 {"prompt", std::string(prompt_text)},
                                                 {"completion", out.text}});
            return out;
        }
        if (attempt < retry_.attempts && backoff.count() > 0) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(backoff.count()) * retry_.multiplier));
        }
    }
    throw BackendError("backend failed after " + std::to_string(retry_.attempts) +
                           " attempts: " + last_error,
                       true);
}

}  // namespace cuecot::llm
