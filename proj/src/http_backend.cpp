#include "cuecot/error.hpp"
#include "cuecot/llm.hpp"

#include "httplib.h"

#include <cstdlib>

namespace cuecot::llm {

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ValidationError("http backend needs a base URL");
    if (config_.api_key.empty()) {
        if (const char* key = std::getenv("CUE_API_KEY"); key) config_.api_key = key;
    }
}

json HttpBackend::request_body(const ChatRequest& request) {
    json body = {
        {"model", request.model},
        {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"top_p", request.top_p},
    };
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
    return body;
}

std::string HttpBackend::parse_response(int status, std::string_view body) {
    json parsed = json::parse(body, nullptr, false);
    auto provider_message = [&]() -> std::string {
        if (parsed.is_object() && parsed.contains("error")) {
            const auto& err = parsed["error"];
            if (err.is_object() && err.contains("message")) return err["message"].get<std::string>();
            if (err.is_string()) return err.get<std::string>();
        }
        return std::string(body.substr(0, 300));
    };
    if (status == 429 || status >= 500) {
        throw BackendError("provider returned HTTP " + std::to_string(status) + ": " +
                               provider_message(),
                           true);
    }
    if (status != 200) {
        throw BackendError("provider returned HTTP " + std::to_string(status) + ": " +
                               provider_message(),
                           false);
    }
    if (parsed.is_discarded()) throw BackendError("provider returned malformed JSON", true);
    if (!parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty()) {
        throw BackendError("provider response has no choices: " + provider_message(), false);
    }
    const auto& choice = parsed["choices"][0];
    const auto& message = choice.value("message", json::object());
    if (message.contains("refusal") && message["refusal"].is_string()) {
        throw BackendError("provider refused: " + message["refusal"].get<std::string>(), false);
    }
    if (choice.value("finish_reason", std::string{}) == "content_filter") {
        throw BackendError("provider refused: content_filter", false);
    }
    std::string content;
    if (message.contains("content") && message["content"].is_string()) {
        content = message["content"].get<std::string>();
    }
    if (content.empty()) throw BackendError("provider returned an empty completion", false);
    return content;
}

std::string HttpBackend::send(const ChatRequest& request) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto res = client.Post(config_.path, headers, request_body(request).dump(), "application/json");
    if (!res) {
        throw BackendError("transport error: " + httplib::to_string(res.error()), true);
    }
    return parse_response(res->status, res->body);
}

}  // namespace cuecot::llm
