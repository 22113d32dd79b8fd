#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuecot/llm.hpp"
#include "cuecot/prompts.hpp"
#include "cuecot/types.hpp"

namespace cuecot::eval {

/// Outcome for the Cue-CoT response S against the baseline O.
enum class Decision { Win, Tie, Lose };
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view s);

/// Judged: scores parsed. Invalid: one side had no valid response.
/// Unparseable: the judge output had no score line.
enum class Outcome { Judged, Invalid, Unparseable };
std::string_view to_string(Outcome o);

struct JudgeIdentity {
    enum class Kind { Machine, Human };
    Kind kind = Kind::Machine;
    /// Model name or annotator id.
    std::string id;
};

struct JudgmentRecord {
    std::string sample_id;
    Metric metric = Metric::Helpfulness;
    Order order = Order::OS;
    double score_first = 0.0;
    double score_second = 0.0;
    std::optional<Decision> decision;
    JudgeIdentity judge;
    std::string raw;
    Outcome outcome = Outcome::Judged;
    /// For Invalid records: "S", "O", or "both".
    std::string invalid_side;
    std::string request_digest;
    double temperature = 0.0;
    double top_p = 0.0;

    double score_s() const { return order == Order::OS ? score_second : score_first; }
    double score_o() const { return order == Order::OS ? score_first : score_second; }
};

void to_json(json& j, const JudgmentRecord& r);
void from_json(const json& j, JudgmentRecord& r);

struct Scores {
    double first = 0.0;
    double second = 0.0;
};

/// Reads the first non-empty line as exactly two reals. Throws ValidationError.
Scores parse_scores(std::string_view judge_output);

/// Win iff score_s > score_o, Tie iff equal. Exact comparison.
Decision decide(double score_s, double score_o);

enum class DenominatorPolicy { ValidOnly, All };
std::string_view to_string(DenominatorPolicy p);

struct WinRateReport {
    std::size_t wins = 0;
    std::size_t ties = 0;
    std::size_t loses = 0;
    double rate = 0.0;
    DenominatorPolicy policy = DenominatorPolicy::ValidOnly;
    std::size_t n_invalid = 0;
    std::size_t n_unparseable = 0;

    std::size_t judged() const { return wins + ties + loses; }
};

void to_json(json& j, const WinRateReport& r);

/// rate = wins / (wins + ties + loses). Unparseable records never count.
/// Under All, invalid records count as a loss when S is missing, a win when
/// only O is missing, and a tie when both are. Throws ValidationError when
/// nothing remains to count.
WinRateReport win_rate(std::span<const JudgmentRecord> records, DenominatorPolicy policy);

/// Renders the judge prompt with slots per `order` (OS: O in slot A), calls
/// the client, and decides. Parse failures yield an Unparseable record.
JudgmentRecord judge_pair(const Dialogue& context, std::string_view response_s,
                          std::string_view response_o, Metric metric, Order order,
                          llm::LlmClient& client, const llm::GenerationParams& params,
                          const prompts::TemplateStore& store = prompts::TemplateStore::bundled());

/// Record for a sample where S and/or O has no valid response.
JudgmentRecord invalid_record(std::string sample_id, Metric metric, Order order,
                              bool s_missing, bool o_missing, JudgeIdentity judge);

/// Smoothing numerator for n-gram orders with no match.
inline constexpr double kBleuEpsilon = 1e-9;

/// Cumulative BLEU-n (uniform weights, brevity penalty). Orders above the
/// hypothesis length are dropped from the geometric mean.
double bleu(std::string_view hypothesis, std::string_view reference, int max_order);

/// Mean of BLEU-1 .. BLEU-4.
double avg_bleu(std::string_view hypothesis, std::string_view reference);

/// Harmonic mean of multiset token-overlap precision and recall.
double token_f1(std::string_view hypothesis, std::string_view reference);

struct Agreement {
    double accuracy = 0.0;
    double kappa = 0.0;
    std::size_t n = 0;
};

/// Accuracy and Cohen's kappa between two ±1 label lists. When expected
/// agreement is 1, kappa is 0. Throws ValidationError on length mismatch,
/// empty input, or values outside {1, -1}.
Agreement agreement(std::span<const int> human, std::span<const int> machine);

/// +1 for Win, -1 for Lose, nullopt otherwise.
std::optional<int> decision_sign(const JudgmentRecord& r);

/// One human label, relative to S.
struct HumanLabel {
    std::string sample_id;
    std::string annotator;
    Metric metric = Metric::Helpfulness;
    int value = 1;
};

void to_json(json& j, const HumanLabel& h);
void from_json(const json& j, HumanLabel& h);

struct AlignmentCell {
    std::string method;
    std::string dataset;
    Metric metric = Metric::Helpfulness;
    Order order = Order::OS;
    /// All (sample, annotator) labels pooled. Empty when nothing overlapped.
    std::optional<Agreement> pooled;
    std::map<std::string, Agreement> per_annotator;
    /// Mean of per-annotator accuracy / kappa.
    std::optional<Agreement> annotator_mean;
    WinRateReport machine_rate;
    /// Human labels skipped because the machine record was a tie or unusable.
    std::size_t n_excluded = 0;
};

struct OrderBiasInput {
    std::string method;
    std::string dataset;
    Metric metric = Metric::Helpfulness;
    std::vector<JudgmentRecord> records_os;
    std::vector<JudgmentRecord> records_so;
    std::vector<HumanLabel> human;
};

/// Agreement of one order's machine judgments with the human labels.
AlignmentCell alignment_cell(const std::string& method, const std::string& dataset, Metric metric,
                             Order order, std::span<const JudgmentRecord> records,
                             std::span<const HumanLabel> human);

/// Agreement of each order's machine judgments with the human labels.
/// Throws ValidationError when the OS and SO sample sets differ or a human
/// label names an unknown sample.
std::vector<AlignmentCell> order_bias_report(std::span<const OrderBiasInput> inputs);
std::vector<AlignmentCell> order_bias_report(std::span<const JudgmentRecord> records_os,
                                             std::span<const JudgmentRecord> records_so,
                                             std::span<const HumanLabel> human);

/// Tab-separated grid: one block per metric, rows method x order
/// ("S -- O" then "O -- S"), one column per dataset, cells "Acc (Kap.C)".
std::string format_alignment_table(std::span<const AlignmentCell> cells);

json to_json_summary(std::span<const AlignmentCell> cells);

}  // namespace cuecot::eval
