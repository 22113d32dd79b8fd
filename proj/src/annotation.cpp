#include "cuecot/annotation.hpp"

#include "cuecot/clock.hpp"
#include "cuecot/error.hpp"
#include "cuecot/prompts.hpp"
#include "cuecot/random.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace cuecot::annotation {

namespace fs = std::filesystem;

std::string PairSource::pair_id() const {
    return sample_id + ":" + std::string(to_string(metric));
}

void to_json(json& j, const PairSource& p) {
    j = json{{"sample_id", p.sample_id},
             {"metric", to_string(p.metric)},
             {"context", p.context},
             {"response_s", p.response_s},
             {"response_o", p.response_o}};
}

void from_json(const json& j, PairSource& p) {
    p.sample_id = j.at("sample_id").get<std::string>();
    p.metric = parse_metric(j.at("metric").get<std::string>());
    p.context = j.at("context").get<Dialogue>();
    p.response_s = j.at("response_s").get<std::string>();
    p.response_o = j.at("response_o").get<std::string>();
}

json to_wire(const BlindedPair& pair) {
    return json{{"pair_id", pair.pair_id},
                {"round", pair.round},
                {"metric", to_string(pair.metric)},
                {"context", pair.context},
                {"left", pair.left},
                {"right", pair.right},
                {"progress", {{"done", pair.done}, {"total", pair.total}}}};
}

void to_json(json& j, const StoredJudgment& s) {
    j = json{{"pair_id", s.pair_id},
             {"sample_id", s.sample_id},
             {"metric", to_string(s.metric)},
             {"annotator_id", s.annotator_id},
             {"round", s.round},
             {"value", s.value},
             {"left_is_s", s.left_is_s},
             {"s_value", s.s_value},
             {"timestamp", s.timestamp}};
}

void from_json(const json& j, StoredJudgment& s) {
    s.pair_id = j.at("pair_id").get<std::string>();
    s.sample_id = j.at("sample_id").get<std::string>();
    s.metric = parse_metric(j.at("metric").get<std::string>());
    s.annotator_id = j.at("annotator_id").get<std::string>();
    s.round = j.at("round").get<int>();
    s.value = j.at("value").get<int>();
    s.left_is_s = j.at("left_is_s").get<bool>();
    s.s_value = j.at("s_value").get<int>();
    s.timestamp = j.value("timestamp", std::string{});
}

json to_wire(const Progress& p) {
    json annotators = json::object();
    for (const auto& [id, a] : p.annotators) {
        annotators[id] = {{"done", a.done}, {"total", a.total}};
    }
    return json{{"round", p.round}, {"annotators", annotators}};
}

bool assign_left_is_s(std::uint64_t seed, std::string_view pair_id, std::string_view annotator,
                      int round) {
    std::string salt = "slot/" + std::string(pair_id) + "/" + std::string(annotator) + "/" +
                       std::to_string(round);
    return Rng(derive_seed(seed, salt)).below(2) == 0;
}

namespace {

void atomic_write(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what(), 1);
    }
}

template <typename T>
std::vector<T> read_jsonl(const fs::path& path) {
    std::vector<T> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        try {
            out.push_back(json::parse(line).get<T>());
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), line_no);
        }
    }
    return out;
}

}  // namespace

AnnotationStore::AnnotationStore(std::vector<PairSource> pairs, StoreConfig config) {
    init(std::move(pairs), std::move(config));
}

void AnnotationStore::init(std::vector<PairSource> pairs, StoreConfig config) {
    if (config.annotators.empty()) throw ValidationError("at least one annotator is required");
    std::set<std::string> seen;
    for (const auto& a : config.annotators) {
        if (a.empty()) throw ValidationError("annotator ids must be non-empty");
        if (!seen.insert(a).second) throw ValidationError("duplicate annotator '" + a + "'");
    }
    config_ = std::move(config);
    Round first;
    first.number = 1;
    for (auto& p : pairs) {
        if (p.response_s.empty() || p.response_o.empty()) {
            throw ValidationError("pair '" + p.pair_id() + "' has an empty response");
        }
        auto id = p.pair_id();
        if (pairs_.count(id)) throw ValidationError("duplicate pair '" + id + "'");
        pair_order_.push_back(id);
        first.pair_ids.push_back(id);
        pairs_.emplace(id, std::move(p));
    }
    rounds_.push_back(std::move(first));
}

std::unique_ptr<AnnotationStore> AnnotationStore::create(const fs::path& dir,
                                                         std::vector<PairSource> pairs,
                                                         StoreConfig config) {
    if (fs::exists(dir / "meta.json")) {
        throw ConflictError("annotation store already exists in " + dir.string());
    }
    std::unique_ptr<AnnotationStore> store(new AnnotationStore());
    store->init(std::move(pairs), std::move(config));
    fs::create_directories(dir);
    store->dir_ = dir;
    std::ostringstream lines;
    for (const auto& id : store->pair_order_) lines << json(store->pairs_.at(id)).dump() << '\n';
    atomic_write(dir / "pairs.jsonl", lines.str());
    std::ofstream(dir / "judgments.jsonl", std::ios::binary | std::ios::app);
    store->write_meta();
    store->write_snapshot();
    return store;
}

std::unique_ptr<AnnotationStore> AnnotationStore::open(const fs::path& dir) {
    json meta = read_json_file(dir / "meta.json");
    StoreConfig config;
    config.seed = meta.at("seed").get<std::uint64_t>();
    config.annotators = meta.at("annotators").get<std::vector<std::string>>();
    std::unique_ptr<AnnotationStore> store(new AnnotationStore());
    store->init(read_jsonl<PairSource>(dir / "pairs.jsonl"), std::move(config));
    store->rounds_.clear();
    for (const auto& r : meta.at("rounds")) {
        Round round;
        round.number = r.at("number").get<int>();
        round.pair_ids = r.at("pair_ids").get<std::vector<std::string>>();
        for (const auto& id : round.pair_ids) {
            if (!store->pairs_.count(id)) throw ParseError("meta.json names unknown pair '" + id + "'", 1);
        }
        store->rounds_.push_back(std::move(round));
    }
    if (store->rounds_.empty()) throw ParseError("meta.json has no rounds", 1);
    for (const auto& j : read_jsonl<StoredJudgment>(dir / "judgments.jsonl")) store->apply(j);
    store->dir_ = dir;
    return store;
}

void AnnotationStore::write_meta() const {
    if (!dir_) return;
    json rounds = json::array();
    for (const auto& r : rounds_) rounds.push_back({{"number", r.number}, {"pair_ids", r.pair_ids}});
    json meta = {{"seed", config_.seed}, {"annotators", config_.annotators}, {"rounds", rounds}};
    atomic_write(*dir_ / "meta.json", meta.dump(2) + "\n");
}

void AnnotationStore::write_snapshot() const {
    if (!dir_) return;
    json snap = to_wire(progress_locked());
    snap["judgments"] = log_.size();
    atomic_write(*dir_ / "snapshot.json", snap.dump(2) + "\n");
}

bool AnnotationStore::known_annotator(const std::string& annotator) const {
    return std::find(config_.annotators.begin(), config_.annotators.end(), annotator) !=
           config_.annotators.end();
}

std::vector<std::string> AnnotationStore::queue_for(const std::string& annotator,
                                                    const Round& round) const {
    auto queue = round.pair_ids;
    Rng rng(derive_seed(config_.seed, "queue/" + annotator + "/" + std::to_string(round.number)));
    rng.shuffle(queue.begin(), queue.end());
    return queue;
}

std::optional<BlindedPair> AnnotationStore::next_pair(const std::string& annotator) const {
    std::shared_lock lock(mu_);
    if (!known_annotator(annotator)) throw NotFoundError("unknown annotator '" + annotator + "'");
    const Round& round = rounds_.back();
    auto judged_it = judged_.find({round.number, annotator});
    const std::size_t done = judged_it == judged_.end() ? 0 : judged_it->second.size();
    for (const auto& id : queue_for(annotator, round)) {
        if (judged_it != judged_.end() && judged_it->second.count(id)) continue;
        const PairSource& src = pairs_.at(id);
        BlindedPair pair;
        pair.pair_id = id;
        pair.round = round.number;
        pair.metric = src.metric;
        pair.context = prompts::render_dialogue(src.context);
        pair.left_is_s = assign_left_is_s(config_.seed, id, annotator, round.number);
        pair.left = pair.left_is_s ? src.response_s : src.response_o;
        pair.right = pair.left_is_s ? src.response_o : src.response_s;
        pair.done = done;
        pair.total = round.pair_ids.size();
        return pair;
    }
    return std::nullopt;
}

void AnnotationStore::apply(const StoredJudgment& j) {
    log_.push_back(j);
    judged_[{j.round, j.annotator_id}][j.pair_id] = log_.size() - 1;
}

StoredJudgment AnnotationStore::submit_judgment(const HumanJudgment& judgment) {
    std::unique_lock lock(mu_);
    if (!known_annotator(judgment.annotator_id)) {
        throw NotFoundError("unknown annotator '" + judgment.annotator_id + "'");
    }
    if (judgment.value != 1 && judgment.value != -1) {
        throw ValidationError("judgment value must be 1 or -1, got " + std::to_string(judgment.value));
    }
    const Round& round = rounds_.back();
    if (judgment.round != 0 && judgment.round != round.number) {
        throw NotFoundError("round " + std::to_string(judgment.round) + " is not open");
    }
    if (std::find(round.pair_ids.begin(), round.pair_ids.end(), judgment.pair_id) ==
        round.pair_ids.end()) {
        throw NotFoundError("pair '" + judgment.pair_id + "' is not in round " +
                            std::to_string(round.number));
    }
    auto it = judged_.find({round.number, judgment.annotator_id});
    if (it != judged_.end() && it->second.count(judgment.pair_id)) {
        throw ConflictError("pair '" + judgment.pair_id + "' already judged by '" +
                            judgment.annotator_id + "'");
    }
    const PairSource& src = pairs_.at(judgment.pair_id);
    StoredJudgment stored;
    stored.pair_id = judgment.pair_id;
    stored.sample_id = src.sample_id;
    stored.metric = src.metric;
    stored.annotator_id = judgment.annotator_id;
    stored.round = round.number;
    stored.value = judgment.value;
    stored.left_is_s = assign_left_is_s(config_.seed, judgment.pair_id, judgment.annotator_id,
                                        round.number);
    stored.s_value = stored.left_is_s ? judgment.value : -judgment.value;
    stored.timestamp = utc_timestamp();
    if (dir_) {
        std::ofstream out(*dir_ / "judgments.jsonl", std::ios::binary | std::ios::app);
        out << json(stored).dump() << '\n';
        if (!out.flush()) throw Error("cannot append to judgment log");
    }
    apply(stored);
    write_snapshot();
    return stored;
}

Round AnnotationStore::requeue_ties(std::span<const eval::JudgmentRecord> machine_records) {
    std::unique_lock lock(mu_);
    std::set<std::string> tied;
    for (const auto& r : machine_records) {
        if (r.outcome != eval::Outcome::Judged || r.decision != eval::Decision::Tie) continue;
        auto id = r.sample_id + ":" + std::string(to_string(r.metric));
        if (pairs_.count(id)) tied.insert(id);
    }
    Round round;
    round.number = static_cast<int>(rounds_.size()) + 1;
    for (const auto& id : pair_order_) {
        if (tied.count(id)) round.pair_ids.push_back(id);
    }
    rounds_.push_back(round);
    write_meta();
    write_snapshot();
    return round;
}

Progress AnnotationStore::progress_locked() const {
    Progress p;
    const Round& round = rounds_.back();
    p.round = round.number;
    for (const auto& a : config_.annotators) {
        auto it = judged_.find({round.number, a});
        p.annotators[a] = {it == judged_.end() ? 0 : it->second.size(), round.pair_ids.size()};
    }
    return p;
}

Progress AnnotationStore::progress() const {
    std::shared_lock lock(mu_);
    return progress_locked();
}

int AnnotationStore::current_round() const {
    std::shared_lock lock(mu_);
    return rounds_.back().number;
}

std::vector<Round> AnnotationStore::rounds() const {
    std::shared_lock lock(mu_);
    return rounds_;
}

std::vector<StoredJudgment> AnnotationStore::judgments() const {
    std::shared_lock lock(mu_);
    return log_;
}

std::vector<eval::HumanLabel> AnnotationStore::export_labels() const {
    std::shared_lock lock(mu_);
    std::map<std::pair<std::string, std::string>, const StoredJudgment*> latest;
    for (const auto& j : log_) {
        auto& slot = latest[{j.pair_id, j.annotator_id}];
        if (!slot || slot->round <= j.round) slot = &j;
    }
    std::vector<eval::HumanLabel> out;
    for (const auto& id : pair_order_) {
        for (const auto& a : config_.annotators) {
            auto it = latest.find({id, a});
            if (it == latest.end()) continue;
            const auto& j = *it->second;
            out.push_back({j.sample_id, j.annotator_id, j.metric, j.s_value});
        }
    }
    return out;
}

}  // namespace cuecot::annotation
