#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "cuecot/evaluation.hpp"
#include "cuecot/types.hpp"

namespace httplib {
class Server;
}

namespace cuecot::annotation {

/// Server-side material for one pair: the two responses with their provenance.
struct PairSource {
    std::string sample_id;
    Metric metric = Metric::Helpfulness;
    Dialogue context;
    std::string response_s;
    std::string response_o;

    /// "<sample_id>:<metric>"
    std::string pair_id() const;
};

void to_json(json& j, const PairSource& p);
void from_json(const json& j, PairSource& p);

/// A pair as one annotator sees it. `left_is_s` is the hidden assignment and
/// is never part of the wire form.
struct BlindedPair {
    std::string pair_id;
    int round = 1;
    Metric metric = Metric::Helpfulness;
    std::string context;
    std::string left;
    std::string right;
    std::size_t done = 0;
    std::size_t total = 0;
    bool left_is_s = true;
};

/// Client-facing JSON: pair_id, round, metric, context, left, right, progress.
json to_wire(const BlindedPair& pair);

/// Slot-relative judgment as submitted: value is +1 when the left response
/// is better and -1 when the right one is.
struct HumanJudgment {
    std::string pair_id;
    std::string annotator_id;
    int value = 0;
    /// 0 means the current round.
    int round = 0;
};

/// Durable form of a judgment, including the hidden assignment and the
/// S-relative translation.
struct StoredJudgment {
    std::string pair_id;
    std::string sample_id;
    Metric metric = Metric::Helpfulness;
    std::string annotator_id;
    int round = 1;
    int value = 0;
    bool left_is_s = true;
    /// +1 when S was preferred, -1 when O was.
    int s_value = 0;
    std::string timestamp;

    eval::Decision decision() const {
        return s_value > 0 ? eval::Decision::Win : eval::Decision::Lose;
    }
};

void to_json(json& j, const StoredJudgment& s);
void from_json(const json& j, StoredJudgment& s);

struct Round {
    int number = 1;
    std::vector<std::string> pair_ids;
};

struct AnnotatorProgress {
    std::size_t done = 0;
    std::size_t total = 0;
};

struct Progress {
    int round = 1;
    std::map<std::string, AnnotatorProgress> annotators;
};

json to_wire(const Progress& p);

struct StoreConfig {
    std::vector<std::string> annotators = {"annotator-1", "annotator-2", "annotator-3"};
    std::uint64_t seed = 0;
};

/// Slot assignment for (pair, annotator, round): true when S goes left.
bool assign_left_is_s(std::uint64_t seed, std::string_view pair_id, std::string_view annotator,
                      int round);

/// Queue of blinded pairs with per-annotator seeded order and slot
/// assignment. With a directory, state lives in `meta.json`, `pairs.jsonl`,
/// the append-only `judgments.jsonl`, and the `snapshot.json` index.
class AnnotationStore {
public:
    /// In-memory store holding round 1 over all pairs.
    AnnotationStore(std::vector<PairSource> pairs, StoreConfig config);

    /// Persistent store; fails with ConflictError when `dir` already holds one.
    static std::unique_ptr<AnnotationStore> create(const std::filesystem::path& dir,
                                                   std::vector<PairSource> pairs,
                                                   StoreConfig config);
    /// Reopens a persistent store and replays its judgment log.
    static std::unique_ptr<AnnotationStore> open(const std::filesystem::path& dir);

    /// The head of this annotator's queue in the current round, unchanged
    /// until judged. Throws NotFoundError for unknown annotators.
    std::optional<BlindedPair> next_pair(const std::string& annotator) const;

    /// Throws NotFoundError (annotator or pair not in the round),
    /// ValidationError (value outside {1, -1}), ConflictError (already judged).
    StoredJudgment submit_judgment(const HumanJudgment& judgment);

    /// Opens a new round with the pairs whose machine decision was a tie.
    /// Slots are drawn afresh. Zero ties give an empty round.
    Round requeue_ties(std::span<const eval::JudgmentRecord> machine_records);

    Progress progress() const;
    int current_round() const;
    std::vector<Round> rounds() const;
    std::vector<StoredJudgment> judgments() const;
    const std::vector<std::string>& annotators() const { return config_.annotators; }
    std::uint64_t seed() const { return config_.seed; }

    /// S-relative labels. A later round replaces an earlier label for the
    /// same (sample, annotator, metric).
    std::vector<eval::HumanLabel> export_labels() const;

private:
    AnnotationStore() = default;
    void init(std::vector<PairSource> pairs, StoreConfig config);
    std::vector<std::string> queue_for(const std::string& annotator, const Round& round) const;
    bool known_annotator(const std::string& annotator) const;
    void apply(const StoredJudgment& j);
    void write_meta() const;
    void write_snapshot() const;
    Progress progress_locked() const;

    StoreConfig config_;
    std::map<std::string, PairSource> pairs_;
    std::vector<std::string> pair_order_;
    std::vector<Round> rounds_;
    std::vector<StoredJudgment> log_;
    /// (round, annotator) -> judged pair ids.
    std::map<std::pair<int, std::string>, std::map<std::string, std::size_t>> judged_;
    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mu_;
};

/// HTTP front end over an AnnotationStore.
///   GET  /api/annotators/{id}/next
///   POST /api/judgments
///   GET  /api/progress
///   POST /api/rounds/requeue-ties
/// Files under `static_dir` are served at `/`.
class AnnotationServer {
public:
    explicit AnnotationServer(AnnotationStore& store,
                              std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds to `port` (0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void serve();
    void stop();

private:
    void routes();

    AnnotationStore& store_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace cuecot::annotation
