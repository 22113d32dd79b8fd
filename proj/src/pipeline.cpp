#include "cuecot/pipeline.hpp"

#include "cuecot/error.hpp"
#include "cuecot/random.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

namespace cuecot::pipeline {

using prompts::RenderedPrompt;
using prompts::TemplateId;
using selection::SelectionKey;

std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::Standard: return "standard";
        case Scheme::OCue: return "o_cue";
        case Scheme::MCue: return "m_cue";
    }
    return "standard";
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::ProcessA: return "process_a";
        case Variant::ProcessB: return "process_b";
        case Variant::ProcessC: return "process_c";
    }
    return "process_a";
}

std::string_view to_string(SelectionStrategy s) {
    return s == SelectionStrategy::Random ? "random" : "top1";
}

Scheme parse_scheme(std::string_view s) {
    if (s == "standard") return Scheme::Standard;
    if (s == "o_cue" || s == "ocue" || s == "o-cue") return Scheme::OCue;
    if (s == "m_cue" || s == "mcue" || s == "m-cue") return Scheme::MCue;
    throw ValidationError("unknown scheme '" + std::string(s) + "'");
}

Variant parse_variant(std::string_view s) {
    if (s == "process_a" || s == "A" || s == "a") return Variant::ProcessA;
    if (s == "process_b" || s == "B" || s == "b") return Variant::ProcessB;
    if (s == "process_c" || s == "C" || s == "c") return Variant::ProcessC;
    throw ValidationError("unknown variant '" + std::string(s) + "'");
}

SelectionStrategy parse_selection(std::string_view s) {
    if (s == "random") return SelectionStrategy::Random;
    if (s == "top1" || s == "top-1") return SelectionStrategy::Top1;
    throw ValidationError("unknown selection strategy '" + std::string(s) + "'");
}

void SchemeConfig::validate() const {
    if (shots != 0 && shots != 1) throw ValidationError("shots must be 0 or 1");
    gen_params.validate();
}

std::string SchemeConfig::label() const {
    std::string out(to_string(scheme));
    if (scheme == Scheme::MCue) out += "/" + std::string(to_string(variant));
    out += "/" + std::to_string(shots) + "-shot";
    if (shots > 0) out += "/" + std::string(to_string(selection));
    return out;
}

void to_json(json& j, const SchemeConfig& c) {
    j = json{{"scheme", to_string(c.scheme)},
             {"variant", to_string(c.variant)},
             {"shots", c.shots},
             {"selection", to_string(c.selection)},
             {"seed", c.seed},
             {"gen_params", c.gen_params},
             {"planning_demo_key", selection::to_string(c.planning_demo_key)}};
}

void from_json(const json& j, SchemeConfig& c) {
    c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    c.variant = parse_variant(j.value("variant", std::string("process_a")));
    c.shots = j.value("shots", 0);
    c.selection = parse_selection(j.value("selection", std::string("top1")));
    c.seed = j.value("seed", std::uint64_t{0});
    c.gen_params = j.at("gen_params").get<llm::GenerationParams>();
    c.planning_demo_key = j.value("planning_demo_key", std::string("by_status")) == "by_context"
                              ? SelectionKey::ByContext
                              : SelectionKey::ByStatus;
}

void to_json(json& j, const ReasoningTrace& t) {
    json steps = json::array();
    for (const auto& s : t.steps) {
        steps.push_back({{"step", s.step},
                         {"template", prompts::to_string(s.prompt.template_id)},
                         {"language", to_string(s.prompt.language)},
                         {"demo_count", s.prompt.demo_count},
                         {"prompt", s.prompt.text},
                         {"output", s.output},
                         {"digest", s.request_digest}});
    }
    json demos = json::array();
    for (const auto& d : t.demos_used) {
        demos.push_back({{"step", d.step}, {"demo_id", d.demo_id}, {"key", d.key}, {"query", d.query}});
    }
    j = json{{"sample_id", t.sample_id},
             {"valid", t.valid},
             {"status", t.status ? json(*t.status) : json(nullptr)},
             {"plan", t.plan ? json(*t.plan) : json(nullptr)},
             {"response", t.response},
             {"steps", steps},
             {"demos_used", demos},
             {"parse_fallback", t.parse_fallback}};
    if (!t.valid) {
        j["reason"] = t.reason;
        j["detail"] = t.detail;
        j["failed_step"] = t.failed_step;
    }
}

void from_json(const json& j, ReasoningTrace& t) {
    t.sample_id = j.at("sample_id").get<std::string>();
    t.valid = j.at("valid").get<bool>();
    t.status = j.at("status").is_null() ? std::nullopt
                                        : std::optional<std::string>(j.at("status").get<std::string>());
    t.plan = j.at("plan").is_null() ? std::nullopt
                                    : std::optional<std::string>(j.at("plan").get<std::string>());
    t.response = j.at("response").get<std::string>();
    t.parse_fallback = j.value("parse_fallback", false);
    t.reason = j.value("reason", std::string{});
    t.detail = j.value("detail", std::string{});
    t.failed_step = j.value("failed_step", std::string{});
    t.steps.clear();
    for (const auto& s : j.at("steps")) {
        StepRecord rec;
        rec.step = s.at("step").get<std::string>();
        rec.prompt.template_id = prompts::parse_template_id(s.at("template").get<std::string>());
        rec.prompt.language = parse_language(s.at("language").get<std::string>());
        rec.prompt.demo_count = s.value("demo_count", 0);
        rec.prompt.text = s.at("prompt").get<std::string>();
        rec.output = s.at("output").get<std::string>();
        rec.request_digest = s.value("digest", std::string{});
        t.steps.push_back(std::move(rec));
    }
    t.demos_used.clear();
    for (const auto& d : j.at("demos_used")) {
        t.demos_used.push_back({d.at("step").get<std::string>(), d.at("demo_id").get<std::string>(),
                                d.at("key").get<std::string>(), d.value("query", std::string{})});
    }
}

namespace {

// Leading labels some models echo back in front of each block.
std::string strip_label(std::string block) {
    static const std::vector<std::string> labels = {"User status:", "User Status:", "Status:",
                                                    "Response:", "用户状态：", "用户状态:",
                                                    "回复：", "回复:"};
    for (const auto& l : labels) {
        if (block.rfind(l, 0) == 0) return text::trim(block.substr(l.size()));
    }
    return block;
}

}  // namespace

OCueOutput parse_ocue_output(std::string_view raw) {
    const std::string body = text::trim(raw);
    if (body.empty()) throw ValidationError("O-Cue output is empty");
    auto lines = text::split_lines(body);
    // First blank line after the opening block.
    std::optional<std::size_t> blank;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (text::is_blank(lines[i])) {
            blank = i;
            break;
        }
    }
    OCueOutput out;
    std::size_t status_end = 0;
    std::size_t response_begin = 0;
    if (blank) {
        status_end = *blank;
        response_begin = *blank + 1;
    } else {
        status_end = 1;
        response_begin = 1;
        out.fallback = true;
    }
    std::vector<std::string> head(lines.begin(), lines.begin() + static_cast<long>(status_end));
    std::vector<std::string> tail(lines.begin() + static_cast<long>(response_begin), lines.end());
    out.status = strip_label(text::trim(text::join(head, "\n")));
    out.response = strip_label(text::trim(text::join(tail, "\n")));
    if (out.status.empty() || out.response.empty()) {
        throw ValidationError("O-Cue output does not contain a status block and a response block");
    }
    return out;
}

double reserved_output_tokens(const llm::GenerationParams& params) {
    if (params.max_tokens) return *params.max_tokens;
    return std::min(512.0, params.context_limit / 4.0);
}

double estimate_tokens(const RenderedPrompt& prompt, const llm::GenerationParams& params) {
    double ratio = params.chars_per_token;
    if (ratio <= 0.0) ratio = prompt.language == Language::Zh ? 1.5 : 4.0;
    return static_cast<double>(text::scalar_count(prompt.text)) / ratio;
}

bool check_length(const RenderedPrompt& prompt, const llm::GenerationParams& params) {
    return estimate_tokens(prompt, params) < params.context_limit - reserved_output_tokens(params);
}

namespace {

class TraceBuilder {
public:
    TraceBuilder(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx)
        : sample_(sample), cfg_(cfg), ctx_(ctx) {
        trace_.sample_id = sample.id;
        cfg.validate();
        if (cfg.shots > 0 && (!ctx.pool || ctx.pool->empty())) {
            throw ValidationError("one-shot runs need a non-empty demonstration pool");
        }
    }

    bool precheck() {
        if (!sample_.ends_with_user()) {
            fail("context_not_user_final", "the last context turn is not a user turn", "input");
            return false;
        }
        return true;
    }

    /// Picks the demonstration for `step`, or none for zero-shot runs.
    std::vector<Demonstration> demos(std::string_view step, SelectionKey key,
                                     const std::string& query) {
        if (cfg_.shots == 0) return {};
        DemoUse use;
        use.step = std::string(step);
        std::vector<Demonstration> out;
        if (cfg_.selection == SelectionStrategy::Random) {
            out = ctx_.pool->select_random(
                1, derive_seed(cfg_.seed, sample_.id + "/" + std::string(step)), sample_.id);
            use.key = "random";
        } else {
            out.push_back(ctx_.pool->select_top1(query, key, sample_.id));
            use.key = std::string(selection::to_string(key));
            use.query = query;
        }
        use.demo_id = out.front().id;
        trace_.demos_used.push_back(std::move(use));
        return out;
    }

    /// Length check plus backend call. Returns nullopt after marking the
    /// trace invalid.
    std::optional<std::string> call(std::string_view step, RenderedPrompt prompt) {
        if (!check_length(prompt, cfg_.gen_params)) {
            fail("context_limit",
                 "estimated " + std::to_string(static_cast<long long>(
                                    estimate_tokens(prompt, cfg_.gen_params))) +
                     " tokens exceeds the input budget",
                 step);
            return std::nullopt;
        }
        try {
            auto completion = ctx_.client.complete(prompt, cfg_.gen_params);
            trace_.steps.push_back(
                {std::string(step), std::move(prompt), completion.text, completion.request_digest});
            return text::trim(completion.text);
        } catch (const BackendError& e) {
            if (e.retryable()) throw;
            fail("backend_error", e.what(), step);
            return std::nullopt;
        }
    }

    void fail(std::string reason, std::string detail, std::string_view step) {
        trace_.valid = false;
        trace_.reason = std::move(reason);
        trace_.detail = std::move(detail);
        trace_.failed_step = std::string(step);
        trace_.response.clear();
    }

    ReasoningTrace& trace() { return trace_; }

private:
    const Dialogue& sample_;
    const SchemeConfig& cfg_;
    const RunContext& ctx_;
    ReasoningTrace trace_;
};

}  // namespace

ReasoningTrace run_standard(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx) {
    if (cfg.scheme != Scheme::Standard) throw ValidationError("run_standard needs scheme=standard");
    TraceBuilder b(sample, cfg, ctx);
    if (!b.precheck()) return std::move(b.trace());
    auto demos = b.demos("response", SelectionKey::ByContext, sample.context_text());
    auto prompt = prompts::render_scheme(ctx.store, TemplateId::Standard, sample, demos);
    if (auto out = b.call("response", std::move(prompt))) b.trace().response = *out;
    return std::move(b.trace());
}

ReasoningTrace run_ocue(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx) {
    if (cfg.scheme != Scheme::OCue) throw ValidationError("run_ocue needs scheme=o_cue");
    TraceBuilder b(sample, cfg, ctx);
    if (!b.precheck()) return std::move(b.trace());
    auto demos = b.demos("combined", SelectionKey::ByContext, sample.context_text());
    auto prompt = prompts::render_scheme(ctx.store, TemplateId::OCue, sample, demos);
    auto out = b.call("combined", std::move(prompt));
    if (!out) return std::move(b.trace());
    try {
        auto parsed = parse_ocue_output(*out);
        b.trace().status = parsed.status;
        b.trace().response = parsed.response;
        b.trace().parse_fallback = parsed.fallback;
    } catch (const ValidationError& e) {
        b.fail("unparseable_output", e.what(), "combined");
    }
    return std::move(b.trace());
}

ReasoningTrace run_mcue(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx,
                        const StatusEditor& status_editor) {
    if (cfg.scheme != Scheme::MCue) throw ValidationError("run_mcue needs scheme=m_cue");
    TraceBuilder b(sample, cfg, ctx);
    if (!b.precheck()) return std::move(b.trace());

    auto status_demos = b.demos("status", SelectionKey::ByContext, sample.context_text());
    auto status = b.call("status",
                         prompts::render_scheme(ctx.store, TemplateId::MCueStatus, sample, status_demos));
    if (!status) return std::move(b.trace());
    if (status_editor) *status = text::trim(status_editor(sample, *status));
    if (status->empty()) {
        b.fail("unparseable_output", "status is empty after editing", "status");
        return std::move(b.trace());
    }
    b.trace().status = *status;

    std::optional<std::string> plan;
    if (cfg.variant != Variant::ProcessA) {
        const auto key = cfg.planning_demo_key;
        auto plan_demos =
            b.demos("planning", key, key == SelectionKey::ByStatus ? *status : sample.context_text());
        plan = b.call("planning", prompts::render_planning(ctx.store, sample, *status, plan_demos));
        if (!plan) return std::move(b.trace());
        b.trace().plan = *plan;
    }

    auto response_demos = b.demos("response", SelectionKey::ByStatus, *status);
    std::map<std::string, std::string> extras;
    TemplateId final_template = TemplateId::MCueResponseA;
    switch (cfg.variant) {
        case Variant::ProcessA:
            extras["status"] = *status;
            break;
        case Variant::ProcessB:
            final_template = TemplateId::MCueResponseB;
            extras["plan"] = *plan;
            break;
        case Variant::ProcessC:
            final_template = TemplateId::MCueResponseC;
            extras["status"] = *status;
            extras["plan"] = *plan;
            break;
    }
    auto response = b.call("response", prompts::render_scheme(ctx.store, final_template, sample,
                                                               response_demos, extras));
    if (response) b.trace().response = *response;
    return std::move(b.trace());
}

ReasoningTrace run_sample(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx,
                          const StatusEditor& status_editor) {
    switch (cfg.scheme) {
        case Scheme::Standard: return run_standard(sample, cfg, ctx);
        case Scheme::OCue: return run_ocue(sample, cfg, ctx);
        case Scheme::MCue: return run_mcue(sample, cfg, ctx, status_editor);
    }
    throw ValidationError("unknown scheme");
}

std::vector<ReasoningTrace> run_all(
    std::span<const Dialogue> samples, const SchemeConfig& cfg, const RunContext& ctx,
    int concurrency, const std::function<void(std::size_t, const ReasoningTrace&)>& on_done) {
    std::vector<ReasoningTrace> out(samples.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mu;
    std::exception_ptr error;
    auto worker = [&] {
        while (true) {
            auto i = next.fetch_add(1);
            if (i >= samples.size()) return;
            try {
                out[i] = run_sample(samples[i], cfg, ctx);
                if (on_done) {
                    std::lock_guard lock(done_mu);
                    on_done(i, out[i]);
                }
            } catch (...) {
                std::lock_guard lock(done_mu);
                if (!error) error = std::current_exception();
                next.store(samples.size());
                return;
            }
        }
    };
    const int n = std::max(1, std::min<int>(concurrency, static_cast<int>(samples.size())));
    std::vector<std::thread> threads;
    for (int t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

std::vector<Demonstration> annotate_pool_status(std::vector<Demonstration> pool,
                                                llm::LlmClient& client,
                                                const llm::GenerationParams& params,
                                                const prompts::TemplateStore& store) {
    for (auto& demo : pool) {
        if (demo.status && !text::is_blank(*demo.status)) continue;
        auto prompt = prompts::render_scheme(store, TemplateId::MCueStatus, demo.context, {});
        demo.status = text::trim(client.complete(prompt, params).text);
        demo.status_source = "model";
    }
    return pool;
}

}  // namespace cuecot::pipeline
