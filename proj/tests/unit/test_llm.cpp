#include "cuecot/error.hpp"
#include "cuecot/llm.hpp"

#include "test_util.hpp"

#include "httplib.h"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace cuecot;
using namespace cuecot::llm;
using cuecot::testing::TempDir;

namespace {

RetryPolicy no_wait(int attempts = 3) { return RetryPolicy{attempts, std::chrono::milliseconds(0), 2.0}; }

/// Fails with the given retryability `failures` times, then replies "ok".
class FlakyBackend : public ChatBackend {
public:
    FlakyBackend(int failures, bool retryable) : failures_(failures), retryable_(retryable) {}
    std::string send(const ChatRequest&) override {
        if (calls_++ < failures_) throw BackendError("flaky", retryable_);
        return "ok";
    }
    std::string name() const override { return "flaky"; }
    int calls() const { return calls_; }

private:
    int failures_;
    bool retryable_;
    std::atomic<int> calls_{0};
};

}  // namespace

TEST(Params, PresetsMatchGenerationAndJudging) {
    auto g = generation_params("m", 2048);
    EXPECT_DOUBLE_EQ(g.temperature, 0.7);
    EXPECT_DOUBLE_EQ(g.top_p, 0.95);
    auto e = evaluation_params("m", 2048);
    EXPECT_DOUBLE_EQ(e.temperature, 0.2);
    EXPECT_DOUBLE_EQ(e.top_p, 0.1);
}

TEST(Params, ValidateRejectsOutOfRange) {
    GenerationParams p;
    p.top_p = 0.0;
    EXPECT_THROW(p.validate(), ValidationError);
    p = {};
    p.temperature = -1;
    EXPECT_THROW(p.validate(), ValidationError);
    p = {};
    p.context_limit = 0;
    EXPECT_THROW(p.validate(), ValidationError);
    p = {};
    p.max_tokens = 0;
    EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Params, JsonRoundTrip) {
    auto p = evaluation_params("gpt", 4096);
    p.max_tokens = 64;
    auto back = json(p).get<GenerationParams>();
    EXPECT_EQ(back.model, "gpt");
    EXPECT_EQ(back.context_limit, 4096);
    EXPECT_EQ(back.max_tokens, 64);
    EXPECT_DOUBLE_EQ(back.top_p, 0.1);
}

TEST(CacheKey, StableAndSensitiveToEveryInput) {
    auto p = generation_params("m", 2048);
    const auto k = cache_key("m", p, "hello");
    EXPECT_EQ(k, cache_key("m", p, "hello"));
    EXPECT_EQ(k.size(), 64u);
    EXPECT_NE(k, cache_key("m2", p, "hello"));
    EXPECT_NE(k, cache_key("m", p, "hello!"));
    auto q = p;
    q.temperature = 0.2;
    EXPECT_NE(k, cache_key("m", q, "hello"));
    q = p;
    q.top_p = 0.5;
    EXPECT_NE(k, cache_key("m", q, "hello"));
    q = p;
    q.max_tokens = 10;
    EXPECT_NE(k, cache_key("m", q, "hello"));
    q = p;
    q.context_limit = 512;  // not a request input
    EXPECT_EQ(k, cache_key("m", q, "hello"));
}

TEST(Mock, ConstantTableAndScript) {
    ChatRequest r{"m", "p1", 0.7, 0.95, std::nullopt, "standard"};
    EXPECT_EQ(MockBackend::constant("x")->send(r), "x");
    auto t = MockBackend::table({{"p1", "one"}});
    EXPECT_EQ(t->send(r), "one");
    r.prompt = "other";
    EXPECT_THROW(t->send(r), BackendError);
    auto s = MockBackend::from_json(json::parse(
        R"({"rules":[{"tag":"o_cue","reply":"tagged"},{"contains":"needle","reply":"found"}],"default":"dflt"})"));
    EXPECT_EQ(s->send({"m", "a needle", 0, 1, {}, "standard"}), "found");
    EXPECT_EQ(s->send({"m", "a needle", 0, 1, {}, "o_cue"}), "tagged");
    EXPECT_EQ(s->send({"m", "nothing", 0, 1, {}, "standard"}), "dflt");
    EXPECT_EQ(s->calls(), 3u);
}

TEST(Mock, SyntheticRepliesAreWellFormedPerTemplate) {
    auto m = MockBackend::synthetic();
    auto judge = m->send({"m", "prompt", 0, 1, {}, "judge_helpfulness"});
    auto first_line = judge.substr(0, judge.find('\n'));
    EXPECT_NE(first_line.find(' '), std::string::npos);
    auto ocue = m->send({"m", "prompt", 0, 1, {}, "o_cue"});
    EXPECT_NE(ocue.find("\n\n"), std::string::npos);
    auto cont = m->send({"m", "prompt", 0, 1, {}, "dialogue_continue"});
    EXPECT_EQ(cont.rfind("[Human]", 0), 0u);
    EXPECT_EQ(m->send({"m", "prompt", 0, 1, {}, "standard"}), m->send({"m", "prompt", 0, 1, {}, "standard"}));
}

TEST(Http, RequestBodyIsChatCompletion) {
    ChatRequest r{"gpt-3.5-turbo", "Hi", 0.2, 0.1, 32, "judge_helpfulness"};
    auto body = HttpBackend::request_body(r);
    EXPECT_EQ(body["model"], "gpt-3.5-turbo");
    EXPECT_EQ(body["messages"][0]["role"], "user");
    EXPECT_EQ(body["messages"][0]["content"], "Hi");
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
    EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.1);
    EXPECT_EQ(body["max_tokens"], 32);
    EXPECT_FALSE(body.contains("tag"));
}

TEST(Http, ParseResponseClassifiesErrors) {
    EXPECT_EQ(HttpBackend::parse_response(200, R"({"choices":[{"message":{"role":"assistant","content":"hey"}}]})"),
              "hey");
    try {
        HttpBackend::parse_response(429, R"({"error":{"message":"slow down"}})");
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_TRUE(e.retryable());
    }
    try {
        HttpBackend::parse_response(503, "");
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_TRUE(e.retryable());
    }
    try {
        HttpBackend::parse_response(400, R"({"error":{"message":"bad"}})");
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_FALSE(e.retryable());
    }
    EXPECT_THROW(HttpBackend::parse_response(200, R"({"choices":[{"message":{"refusal":"no"}}]})"),
                 BackendError);
    EXPECT_THROW(HttpBackend::parse_response(
                     200, R"({"choices":[{"finish_reason":"content_filter","message":{"content":"x"}}]})"),
                 BackendError);
    EXPECT_THROW(HttpBackend::parse_response(200, R"({"choices":[{"message":{"content":""}}]})"),
                 BackendError);
}

TEST(Http, TalksToLocalEndpoint) {
    httplib::Server server;
    std::string seen_auth;
    json seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"6 9"}}]})",
                        "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    HttpConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key = "sk-test";
    HttpBackend backend(cfg);
    auto reply = backend.send({"gpt", "judge me", 0.2, 0.1, std::nullopt, "judge_helpfulness"});
    server.stop();
    t.join();
    EXPECT_EQ(reply, "6 9");
    EXPECT_EQ(seen_auth, "Bearer sk-test");
    EXPECT_EQ(seen_body["messages"][0]["content"], "judge me");
}

TEST(Http, UnreachableEndpointIsRetryable) {
    HttpConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    HttpBackend backend(cfg);
    try {
        backend.send({"gpt", "x", 0.2, 0.1, std::nullopt, ""});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_TRUE(e.retryable());
    }
}

TEST(Client, SecondIdenticalCallIsCached) {
    auto mock = MockBackend::constant("reply");
    LlmClient client(mock, std::make_shared<MemoryCache>(), no_wait());
    auto p = generation_params("m", 2048);
    auto a = client.complete("prompt", p, "standard");
    auto b = client.complete("prompt", p, "standard");
    EXPECT_FALSE(a.cached);
    EXPECT_TRUE(b.cached);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(a.request_digest, b.request_digest);
    EXPECT_EQ(mock->calls(), 1u);
    EXPECT_EQ(client.calls(), 2u);
    client.complete("prompt", evaluation_params("m", 2048), "standard");
    EXPECT_EQ(mock->calls(), 2u);
}

TEST(Client, DiskCacheSurvivesRestart) {
    TempDir dir;
    auto p = generation_params("m", 2048);
    std::string digest;
    {
        LlmClient client(MockBackend::constant("persisted"), std::make_shared<DiskCache>(dir.path()), no_wait());
        digest = client.complete("prompt", p, "standard").request_digest;
    }
    EXPECT_TRUE(std::filesystem::exists(dir / (digest + ".json")));
    auto record = json::parse(cuecot::testing::read_file(dir / (digest + ".json")));
    EXPECT_EQ(record["completion"], "persisted");
    EXPECT_EQ(record["prompt"], "prompt");
    auto mock = MockBackend::constant("different");
    LlmClient client(mock, std::make_shared<DiskCache>(dir.path()), no_wait());
    auto c = client.complete("prompt", p, "standard");
    EXPECT_TRUE(c.cached);
    EXPECT_EQ(c.text, "persisted");
    EXPECT_EQ(mock->calls(), 0u);
}

TEST(Client, RetriesRetryableErrors) {
    auto flaky = std::make_shared<FlakyBackend>(2, true);
    LlmClient client(flaky, std::make_shared<MemoryCache>(), no_wait(3));
    EXPECT_EQ(client.complete("x", generation_params("m", 2048)).text, "ok");
    EXPECT_EQ(flaky->calls(), 3);
    EXPECT_EQ(client.backend_requests(), 3u);
}

TEST(Client, ExhaustedRetriesStayRetryable) {
    auto flaky = std::make_shared<FlakyBackend>(10, true);
    LlmClient client(flaky, std::make_shared<MemoryCache>(), no_wait(3));
    try {
        client.complete("x", generation_params("m", 2048));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_TRUE(e.retryable());
    }
    EXPECT_EQ(flaky->calls(), 3);
}

TEST(Client, NonRetryableErrorsFailImmediately) {
    auto flaky = std::make_shared<FlakyBackend>(1, false);
    LlmClient client(flaky, std::make_shared<MemoryCache>(), no_wait(3));
    EXPECT_THROW(client.complete("x", generation_params("m", 2048)), BackendError);
    EXPECT_EQ(flaky->calls(), 1);
}

TEST(Client, BlankReplyIsAnError) {
    LlmClient client(MockBackend::constant("  \n"), std::make_shared<MemoryCache>(), no_wait());
    EXPECT_THROW(client.complete("x", generation_params("m", 2048)), BackendError);
}

TEST(Client, InFlightRequestsAreBounded) {
    std::atomic<int> current{0}, peak{0};
    auto slow = std::make_shared<MockBackend>([&](const ChatRequest& r) {
        int now = ++current;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --current;
        return "r:" + r.prompt;
    });
    LlmClient client(slow, std::make_shared<MemoryCache>(), no_wait(), 2);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] { client.complete("p" + std::to_string(i), generation_params("m", 2048)); });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_EQ(slow->calls(), 8u);
}
