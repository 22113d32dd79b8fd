#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuecot/llm.hpp"
#include "cuecot/prompts.hpp"
#include "cuecot/types.hpp"

namespace cuecot::corpus {

/// Unicode scalars for zh, whitespace tokens for en.
enum class LengthUnit { Chars, Tokens, Mixed };
std::string_view to_string(LengthUnit unit);

struct DatasetStats {
    double avg_context_len = 0.0;
    double avg_response_len = 0.0;
    std::size_t samples = 0;
    LengthUnit unit = LengthUnit::Tokens;
    /// Dialogues that carried a ground truth (the Avg.R denominator).
    std::size_t with_response = 0;
};

void to_json(json& j, const DatasetStats& s);

enum class Polarity { Positive, Negative, Neutral };

struct PersonaSeed {
    std::string text;
    std::optional<Polarity> polarity;
};

/// A question-answer pair scraped from a QA forum, used to seed construction.
struct SeedQA {
    std::string id;
    Language language = Language::En;
    std::string question;
    std::string answer;
    std::string source;
};

/// Parses line-delimited dataset records. Records without a `source` get
/// `descriptor`. Throws ParseError carrying the 1-based line number.
std::vector<Dialogue> parse_dataset(std::istream& in, std::string_view descriptor = {});
std::vector<Dialogue> load_dataset(const std::filesystem::path& path,
                                   std::string_view descriptor = {});

std::string serialize_dataset(std::span<const Dialogue> dialogues);
void save_dataset(const std::filesystem::path& path, std::span<const Dialogue> dialogues);

/// SHA-256 of the file bytes.
std::string file_digest(const std::filesystem::path& path);

std::size_t text_length(std::string_view text, Language lang);

/// Throws ValidationError for an empty list.
DatasetStats compute_stats(std::span<const Dialogue> dialogues);

struct D4Sample {
    std::vector<Turn> context;
    std::string response;
    std::size_t response_index = 0;
};

inline constexpr std::string_view kEmpathicComfort = "empathic comfort";

/// Longest system turn labeled "empathic comfort" (earliest on ties) becomes
/// the response; everything before it is the context. Throws ValidationError
/// when no turn carries the label, meaning the sample must be skipped.
D4Sample extract_d4_ground_truth(const Dialogue& dialogue);

/// Applies extract_d4_ground_truth and returns a benchmark-ready dialogue.
Dialogue to_d4_benchmark(const Dialogue& dialogue);

/// PsyQA layout: the question description becomes an extra leading user turn.
Dialogue make_psyqa_dialogue(std::string id, std::string_view description,
                             std::string_view question, std::string_view answer);

/// Sorts each group by response length, then draws `per_group` items
/// uniformly at random from every group. Output keeps input order.
std::vector<Dialogue> sample_per_group(std::span<const Dialogue> dialogues, std::size_t per_group,
                                       std::uint64_t seed,
                                       const std::function<std::string(const Dialogue&)>& group_of);

std::vector<SeedQA> load_seeds(const std::filesystem::path& path);

PersonaSeed infer_persona(const SeedQA& seed, llm::LlmClient& client,
                          const llm::GenerationParams& params,
                          const prompts::TemplateStore& store = prompts::TemplateStore::bundled());

/// Splits a transcript on [Human] / [AI] markers. Parsing starts with
/// [Human] and stops at the first out-of-turn marker or empty statement.
/// Throws ValidationError (with the raw text) when nothing can be parsed.
std::vector<Turn> parse_transcript(std::string_view completion);

Dialogue continue_dialogue(const SeedQA& seed, const PersonaSeed& persona, llm::LlmClient& client,
                           const llm::GenerationParams& params,
                           const prompts::TemplateStore& store = prompts::TemplateStore::bundled());

/// Moves a trailing system turn into ground_truth so the context ends with
/// the user. Returns the dialogue unchanged otherwise.
Dialogue split_last_response(Dialogue dialogue);

}  // namespace cuecot::corpus
