#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cuecot/annotation.hpp"
#include "cuecot/evaluation.hpp"
#include "cuecot/llm.hpp"
#include "cuecot/pipeline.hpp"
#include "cuecot/prompts.hpp"

namespace cuecot::harness {

/// Named model setting: model id and context window.
struct BackendProfile {
    std::string name;
    std::string model;
    int context_limit = 2048;
    /// Profiles other than "mock" talk to an HTTP endpoint.
    bool remote = false;
};

/// "mock", "belle", "alpaca", or "chatgpt". Throws ValidationError otherwise.
BackendProfile backend_profile(std::string_view name);

/// Shared services for every command.
struct Environment {
    std::shared_ptr<llm::LlmClient> client;
    BackendProfile profile;
    const prompts::TemplateStore* store = &prompts::TemplateStore::bundled();
    std::filesystem::path runs_dir = "runs";
    int concurrency = 4;
};

/// Literal accepted in place of a baseline run id.
inline constexpr std::string_view kGroundTruth = "ground-truth";

struct RunManifest {
    std::string run_id;
    /// "generate" or "evaluate".
    std::string kind;
    std::string dataset_path;
    std::string dataset_digest;
    std::string backend_profile;
    std::map<std::string, std::string> template_digests;
    std::string created_at;

    // generate
    std::optional<pipeline::SchemeConfig> scheme;
    std::string pool_path;
    std::string pool_digest;

    // evaluate
    std::string run_s;
    /// Baseline run id or kGroundTruth.
    std::string baseline;
    Metric metric = Metric::Helpfulness;
    Order order = Order::OS;
    std::optional<llm::GenerationParams> judge_params;

    /// Everything except run_id and created_at; two manifests describing the
    /// same work have equal identities.
    json identity() const;
};

void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);

RunManifest read_manifest(const std::filesystem::path& run_dir);

struct GenerateOptions {
    std::string run_id;
    std::filesystem::path dataset;
    std::optional<std::filesystem::path> pool;
    pipeline::SchemeConfig scheme;
    /// Discard a prior run directory whose manifest differs.
    bool force = false;
    /// Stop after this many newly completed samples, leaving a resumable
    /// partial run.
    std::optional<std::size_t> stop_after;
};

struct GenerateResult {
    std::filesystem::path run_dir;
    std::size_t samples = 0;
    std::size_t completed = 0;
    std::size_t valid = 0;
    std::size_t resumed = 0;
    bool finished = false;
    std::map<std::string, std::size_t> invalid_reasons;
};

/// Writes `<runs>/<id>/manifest.json` and `traces.jsonl` (dataset order).
/// Progress is kept in `traces.partial.jsonl` until every sample is done.
/// A prior run with a different manifest identity is refused with
/// ConflictError unless `force`.
GenerateResult cmd_generate(const GenerateOptions& options, Environment& env);

std::vector<pipeline::ReasoningTrace> read_traces(const std::filesystem::path& run_dir);

struct EvaluateOptions {
    std::string run_id;
    std::string run_s;
    /// Run id of the baseline, or kGroundTruth.
    std::string baseline;
    Metric metric = Metric::Helpfulness;
    Order order = Order::OS;
    bool force = false;
};

struct AutoMetrics {
    double avg_bleu = 0.0;
    double f1 = 0.0;
    std::size_t n = 0;
};

struct EvaluateResult {
    std::filesystem::path run_dir;
    std::vector<eval::JudgmentRecord> records;
    eval::WinRateReport valid_only;
    eval::WinRateReport all;
    std::optional<AutoMetrics> metrics;
};

/// Judges run_s against the baseline for every dataset sample and writes
/// `judgments.jsonl`, `summary.json`, and `report.tsv`. Both runs must share
/// a dataset digest (ValidationError otherwise).
EvaluateResult cmd_evaluate(const EvaluateOptions& options, Environment& env);

std::vector<eval::JudgmentRecord> read_judgments(const std::filesystem::path& run_dir);

struct ReportOptions {
    std::vector<std::string> eval_runs;
    std::vector<eval::HumanLabel> human;
};

struct Report {
    /// One row per evaluation run.
    std::string win_rate_grid;
    /// OS/SO pairs of evaluation runs over the same comparison.
    std::string order_grid;
    json summary;
};

/// Reads only run directories; never touches a backend.
Report cmd_report(const ReportOptions& options, const std::filesystem::path& runs_dir);

/// Agreement of one evaluation run with human labels.
eval::AlignmentCell cmd_agree(const std::string& eval_run, std::span<const eval::HumanLabel> human,
                              const std::filesystem::path& runs_dir);

/// Annotation pairs from an evaluation run: samples judged with both
/// responses present, `limit` of them drawn with `seed` (all when 0).
std::vector<annotation::PairSource> annotation_pairs(const std::string& eval_run,
                                                     std::size_t limit, std::uint64_t seed,
                                                     const std::filesystem::path& runs_dir);

std::vector<eval::HumanLabel> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const eval::HumanLabel> labels);

}  // namespace cuecot::harness
