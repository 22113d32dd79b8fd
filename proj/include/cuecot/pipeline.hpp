#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuecot/llm.hpp"
#include "cuecot/prompts.hpp"
#include "cuecot/selection.hpp"
#include "cuecot/types.hpp"

namespace cuecot::pipeline {

enum class Scheme { Standard, OCue, MCue };
/// Final M-Cue step inputs: A = (c, s), B = (c, p), C = (c, s, p).
enum class Variant { ProcessA, ProcessB, ProcessC };
enum class SelectionStrategy { Random, Top1 };

std::string_view to_string(Scheme s);
std::string_view to_string(Variant v);
std::string_view to_string(SelectionStrategy s);
Scheme parse_scheme(std::string_view s);
Variant parse_variant(std::string_view s);
SelectionStrategy parse_selection(std::string_view s);

struct SchemeConfig {
    Scheme scheme = Scheme::Standard;
    Variant variant = Variant::ProcessA;
    int shots = 0;
    SelectionStrategy selection = SelectionStrategy::Top1;
    std::uint64_t seed = 0;
    llm::GenerationParams gen_params;
    /// Key used to pick the planning-step demonstration in one-shot runs.
    selection::SelectionKey planning_demo_key = selection::SelectionKey::ByStatus;

    void validate() const;
    /// e.g. "m_cue/process_a/1-shot/top1"
    std::string label() const;
};

void to_json(json& j, const SchemeConfig& c);
void from_json(const json& j, SchemeConfig& c);

struct StepRecord {
    /// "response", "combined", "status", or "planning".
    std::string step;
    prompts::RenderedPrompt prompt;
    std::string output;
    std::string request_digest;
};

struct DemoUse {
    std::string step;
    std::string demo_id;
    /// "by_context", "by_status", or "random".
    std::string key;
    /// Text the selection was keyed on; empty for random selection.
    std::string query;
};

struct ReasoningTrace {
    std::string sample_id;
    std::optional<std::string> status;
    std::optional<std::string> plan;
    std::string response;
    /// Steps that reached the backend, in order.
    std::vector<StepRecord> steps;
    std::vector<DemoUse> demos_used;
    bool valid = true;
    /// Machine-readable failure code: "context_limit", "backend_error"
    /// (refusals and other non-retryable provider errors),
    /// "unparseable_output", or "context_not_user_final". Retryable errors
    /// that outlast the retry policy propagate instead.
    std::string reason;
    std::string detail;
    std::string failed_step;
    /// O-Cue output was split with the single-newline fallback.
    bool parse_fallback = false;
};

void to_json(json& j, const ReasoningTrace& t);
void from_json(const json& j, ReasoningTrace& t);

struct OCueOutput {
    std::string status;
    std::string response;
    bool fallback = false;
};

/// Splits a combined O-Cue completion at the first blank line; without one,
/// at the first newline (flagged as fallback). Throws ValidationError when
/// fewer than two non-empty blocks exist.
OCueOutput parse_ocue_output(std::string_view text);

/// Output budget held back from the context window: max_tokens when set,
/// otherwise min(512, context_limit / 4).
double reserved_output_tokens(const llm::GenerationParams& params);

/// Prompt length in token-equivalents via the characters-per-token proxy.
double estimate_tokens(const prompts::RenderedPrompt& prompt, const llm::GenerationParams& params);

/// True iff the estimate is strictly below context_limit minus the reserve.
bool check_length(const prompts::RenderedPrompt& prompt, const llm::GenerationParams& params);

/// Rewrites the inferred status before it feeds later steps.
using StatusEditor = std::function<std::string(const Dialogue& sample, const std::string& status)>;

/// Everything a scheme run needs besides the sample and its configuration.
struct RunContext {
    llm::LlmClient& client;
    const selection::DemoPool* pool = nullptr;
    const prompts::TemplateStore& store = prompts::TemplateStore::bundled();
};

ReasoningTrace run_standard(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx);
ReasoningTrace run_ocue(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx);
ReasoningTrace run_mcue(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx,
                        const StatusEditor& status_editor = {});

/// Dispatches on cfg.scheme.
ReasoningTrace run_sample(const Dialogue& sample, const SchemeConfig& cfg, const RunContext& ctx,
                          const StatusEditor& status_editor = {});

/// Runs samples on up to `concurrency` threads. Results keep input order.
/// `on_done` is called (serialized) as each trace completes.
std::vector<ReasoningTrace> run_all(std::span<const Dialogue> samples, const SchemeConfig& cfg,
                                    const RunContext& ctx, int concurrency,
                                    const std::function<void(std::size_t, const ReasoningTrace&)>&
                                        on_done = {});

/// Fills missing pool statuses with zero-shot M-Cue status inference and
/// marks them status_source = "model".
std::vector<Demonstration> annotate_pool_status(std::vector<Demonstration> pool,
                                                llm::LlmClient& client,
                                                const llm::GenerationParams& params,
                                                const prompts::TemplateStore& store =
                                                    prompts::TemplateStore::bundled());

}  // namespace cuecot::pipeline
