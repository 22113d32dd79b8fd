#include "cuecot/harness.hpp"

#include "cuecot/clock.hpp"
#include "cuecot/corpus.hpp"
#include "cuecot/error.hpp"
#include "cuecot/random.hpp"
#include "cuecot/selection.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace cuecot::harness {

namespace fs = std::filesystem;

BackendProfile backend_profile(std::string_view name) {
    if (name == "mock") return {"mock", "mock", 2048, false};
    if (name == "belle") return {"belle", "belle-llama-7b-2m", 2048, true};
    if (name == "alpaca") return {"alpaca", "chinese-alpaca-plus-lora-7b", 512, true};
    if (name == "chatgpt") return {"chatgpt", "gpt-3.5-turbo", 4096, true};
    throw ValidationError("unknown backend profile '" + std::string(name) + "'");
}

json RunManifest::identity() const {
    json j = *this;
    j.erase("run_id");
    j.erase("created_at");
    return j;
}

void to_json(json& j, const RunManifest& m) {
    j = json{{"run_id", m.run_id},
             {"kind", m.kind},
             {"created_at", m.created_at},
             {"dataset", {{"path", m.dataset_path}, {"digest", m.dataset_digest}}},
             {"backend_profile", m.backend_profile},
             {"template_digests", m.template_digests}};
    if (m.scheme) {
        j["scheme"] = *m.scheme;
        j["seeds"] = {{"selection", m.scheme->seed}};
        j["planning_demo_key"] = selection::to_string(m.scheme->planning_demo_key);
    }
    if (m.kind == "generate") {
        j["pool"] = m.pool_path.empty() ? json(nullptr)
                                        : json{{"path", m.pool_path}, {"digest", m.pool_digest}};
    }
    if (m.kind == "evaluate") {
        j["run_s"] = m.run_s;
        j["baseline"] = m.baseline;
        j["metric"] = to_string(m.metric);
        j["order"] = to_string(m.order);
        if (m.judge_params) j["judge_params"] = *m.judge_params;
    }
}

void from_json(const json& j, RunManifest& m) {
    m.run_id = j.at("run_id").get<std::string>();
    m.kind = j.at("kind").get<std::string>();
    m.created_at = j.value("created_at", std::string{});
    m.dataset_path = j.at("dataset").at("path").get<std::string>();
    m.dataset_digest = j.at("dataset").at("digest").get<std::string>();
    m.backend_profile = j.value("backend_profile", std::string{});
    m.template_digests = j.value("template_digests", std::map<std::string, std::string>{});
    if (auto it = j.find("scheme"); it != j.end() && !it->is_null()) {
        m.scheme = it->get<pipeline::SchemeConfig>();
    }
    if (auto it = j.find("pool"); it != j.end() && !it->is_null()) {
        m.pool_path = it->at("path").get<std::string>();
        m.pool_digest = it->at("digest").get<std::string>();
    }
    if (m.kind == "evaluate") {
        m.run_s = j.at("run_s").get<std::string>();
        m.baseline = j.at("baseline").get<std::string>();
        m.metric = parse_metric(j.at("metric").get<std::string>());
        m.order = parse_order(j.at("order").get<std::string>());
        if (auto it = j.find("judge_params"); it != j.end()) {
            m.judge_params = it->get<llm::GenerationParams>();
        }
    }
}

namespace {

void check_run_id(const std::string& id) {
    if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
        throw ValidationError("invalid run id '" + id + "'");
    }
}

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

template <typename T>
std::vector<T> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::vector<T> out;
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

template <typename T>
std::string to_jsonl(std::span<const T> items) {
    std::ostringstream out;
    for (const auto& item : items) out << json(item).dump() << '\n';
    return out.str();
}

void write_manifest(const fs::path& run_dir, const RunManifest& m) {
    atomic_write(run_dir / "manifest.json", json(m).dump(2) + "\n");
}

/// Creates the run directory or validates a prior one. Returns true when a
/// prior run with the same identity exists.
bool prepare_run_dir(const fs::path& run_dir, RunManifest& manifest, bool force,
                     std::initializer_list<const char*> outputs) {
    if (fs::exists(run_dir / "manifest.json")) {
        RunManifest prior = read_manifest(run_dir);
        if (prior.identity() == manifest.identity()) {
            manifest.created_at = prior.created_at;
            return true;
        }
        if (!force) {
            throw ConflictError("run directory " + run_dir.string() +
                                " holds a different run; pass --force to replace it");
        }
        for (const char* name : outputs) fs::remove(run_dir / name);
    }
    fs::create_directories(run_dir);
    write_manifest(run_dir, manifest);
    return false;
}

std::string dataset_name(const std::string& path) { return fs::path(path).stem().string(); }

std::string method_label(const RunManifest& m) {
    return m.scheme ? m.scheme->label() : m.run_s;
}

template <typename Fn>
void parallel_for(std::size_t n, int concurrency, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr error;
    auto worker = [&] {
        while (true) {
            auto i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    const int threads = std::max(1, std::min<int>(concurrency, static_cast<int>(n)));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string fmt_rate(double r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", r);
    return buf;
}

std::map<std::string, pipeline::ReasoningTrace> index_traces(
    std::vector<pipeline::ReasoningTrace> traces) {
    std::map<std::string, pipeline::ReasoningTrace> out;
    for (auto& t : traces) {
        auto id = t.sample_id;
        out.emplace(std::move(id), std::move(t));
    }
    return out;
}

std::optional<std::string> valid_response(
    const std::map<std::string, pipeline::ReasoningTrace>& traces, const std::string& id) {
    auto it = traces.find(id);
    if (it == traces.end() || !it->second.valid || text::is_blank(it->second.response)) {
        return std::nullopt;
    }
    return it->second.response;
}

/// The dataset named by a manifest, after checking it still has the recorded digest.
std::vector<Dialogue> load_checked_dataset(const RunManifest& m) {
    if (!fs::exists(m.dataset_path)) throw ValidationError("dataset not found: " + m.dataset_path);
    if (corpus::file_digest(m.dataset_path) != m.dataset_digest) {
        throw ValidationError("dataset " + m.dataset_path + " no longer matches run " + m.run_id);
    }
    return corpus::load_dataset(m.dataset_path);
}

RunManifest read_generate_manifest(const fs::path& runs_dir, const std::string& run_id) {
    check_run_id(run_id);
    auto m = read_manifest(runs_dir / run_id);
    if (m.kind != "generate") throw ValidationError("run " + run_id + " is not a generation run");
    return m;
}

RunManifest read_evaluate_manifest(const fs::path& runs_dir, const std::string& run_id) {
    check_run_id(run_id);
    auto m = read_manifest(runs_dir / run_id);
    if (m.kind != "evaluate") throw ValidationError("run " + run_id + " is not an evaluation run");
    return m;
}

}  // namespace

RunManifest read_manifest(const fs::path& run_dir) {
    std::ifstream in(run_dir / "manifest.json", std::ios::binary);
    if (!in) throw NotFoundError("no manifest in " + run_dir.string());
    try {
        return json::parse(in).get<RunManifest>();
    } catch (const json::exception& e) {
        throw ParseError((run_dir / "manifest.json").string() + ": " + e.what(), 0);
    }
}

std::vector<pipeline::ReasoningTrace> read_traces(const fs::path& run_dir) {
    if (!fs::exists(run_dir / "traces.jsonl")) {
        throw ValidationError("run " + run_dir.string() + " has not finished generating");
    }
    return read_jsonl<pipeline::ReasoningTrace>(run_dir / "traces.jsonl");
}

GenerateResult cmd_generate(const GenerateOptions& options, Environment& env) {
    check_run_id(options.run_id);
    if (!env.client) throw ValidationError("no backend configured");
    options.scheme.validate();

    auto dataset = corpus::load_dataset(options.dataset);
    RunManifest manifest;
    manifest.run_id = options.run_id;
    manifest.kind = "generate";
    manifest.dataset_path = options.dataset.string();
    manifest.dataset_digest = corpus::file_digest(options.dataset);
    manifest.backend_profile = env.profile.name;
    manifest.template_digests = env.store->digests();
    manifest.created_at = utc_timestamp();
    manifest.scheme = options.scheme;

    std::unique_ptr<selection::DemoPool> pool;
    if (options.pool) {
        manifest.pool_path = options.pool->string();
        manifest.pool_digest = corpus::file_digest(*options.pool);
        pool = std::make_unique<selection::DemoPool>(selection::load_pool(*options.pool));
        if (options.scheme.shots > 0 && options.scheme.scheme != pipeline::Scheme::Standard &&
            !pool->all_have_status()) {
            throw ValidationError("pool " + options.pool->string() +
                                  " has demonstrations without a status; run corpus annotate-pool first");
        }
    }

    GenerateResult result;
    result.run_dir = env.runs_dir / options.run_id;
    result.samples = dataset.size();
    const fs::path traces_path = result.run_dir / "traces.jsonl";
    const fs::path partial_path = result.run_dir / "traces.partial.jsonl";
    prepare_run_dir(result.run_dir, manifest, options.force,
                    {"traces.jsonl", "traces.partial.jsonl", "stats.json"});

    std::map<std::string, pipeline::ReasoningTrace> done;
    if (fs::exists(traces_path)) {
        done = index_traces(read_jsonl<pipeline::ReasoningTrace>(traces_path));
    } else if (fs::exists(partial_path)) {
        done = index_traces(read_jsonl<pipeline::ReasoningTrace>(partial_path));
    }
    std::set<std::string> ids;
    for (const auto& d : dataset) ids.insert(d.id);
    std::erase_if(done, [&](const auto& kv) { return !ids.count(kv.first); });
    result.resumed = done.size();

    std::vector<Dialogue> remaining;
    for (const auto& d : dataset) {
        if (!done.count(d.id)) remaining.push_back(d);
    }
    if (options.stop_after && remaining.size() > *options.stop_after) {
        remaining.resize(*options.stop_after);
    }

    if (!remaining.empty()) {
        std::ofstream partial(partial_path, std::ios::binary | std::ios::app);
        if (!partial) throw Error("cannot write " + partial_path.string());
        pipeline::RunContext ctx{*env.client, pool.get(), *env.store};
        pipeline::run_all(remaining, options.scheme, ctx, env.concurrency,
                          [&](std::size_t, const pipeline::ReasoningTrace& trace) {
                              partial << json(trace).dump() << '\n';
                              partial.flush();
                              done.emplace(trace.sample_id, trace);
                          });
    }

    result.completed = done.size();
    for (const auto& [id, trace] : done) {
        if (trace.valid) {
            ++result.valid;
        } else {
            ++result.invalid_reasons[trace.reason];
        }
    }
    result.finished = result.completed == dataset.size();
    if (result.finished && !fs::exists(traces_path)) {
        std::vector<pipeline::ReasoningTrace> ordered;
        ordered.reserve(dataset.size());
        for (const auto& d : dataset) ordered.push_back(done.at(d.id));
        atomic_write(traces_path, to_jsonl<pipeline::ReasoningTrace>(ordered));
        fs::remove(partial_path);
    }
    if (result.finished) {
        json stats = {{"samples", result.samples},
                      {"valid", result.valid},
                      {"invalid", result.samples - result.valid},
                      {"invalid_reasons", result.invalid_reasons}};
        atomic_write(result.run_dir / "stats.json", stats.dump(2) + "\n");
    }
    return result;
}

std::vector<eval::JudgmentRecord> read_judgments(const fs::path& run_dir) {
    return read_jsonl<eval::JudgmentRecord>(run_dir / "judgments.jsonl");
}

EvaluateResult cmd_evaluate(const EvaluateOptions& options, Environment& env) {
    check_run_id(options.run_id);
    if (!env.client) throw ValidationError("no backend configured");
    const RunManifest s_man = read_generate_manifest(env.runs_dir, options.run_s);
    auto dataset = load_checked_dataset(s_man);
    auto s_traces = index_traces(read_traces(env.runs_dir / options.run_s));

    const bool ground_truth = options.baseline == kGroundTruth;
    std::map<std::string, pipeline::ReasoningTrace> o_traces;
    if (!ground_truth) {
        const RunManifest o_man = read_generate_manifest(env.runs_dir, options.baseline);
        if (o_man.dataset_digest != s_man.dataset_digest) {
            throw ValidationError("runs " + options.run_s + " and " + options.baseline +
                                  " were generated from different datasets");
        }
        o_traces = index_traces(read_traces(env.runs_dir / options.baseline));
    }

    const auto params = llm::evaluation_params(env.profile.model, env.profile.context_limit);
    RunManifest manifest;
    manifest.run_id = options.run_id;
    manifest.kind = "evaluate";
    manifest.dataset_path = s_man.dataset_path;
    manifest.dataset_digest = s_man.dataset_digest;
    manifest.backend_profile = env.profile.name;
    manifest.template_digests = env.store->digests();
    manifest.created_at = utc_timestamp();
    manifest.scheme = s_man.scheme;
    manifest.run_s = options.run_s;
    manifest.baseline = options.baseline;
    manifest.metric = options.metric;
    manifest.order = options.order;
    manifest.judge_params = params;

    EvaluateResult result;
    result.run_dir = env.runs_dir / options.run_id;
    prepare_run_dir(result.run_dir, manifest, options.force,
                    {"judgments.jsonl", "summary.json", "report.tsv"});

    const eval::JudgeIdentity judge{eval::JudgeIdentity::Kind::Machine, params.model};
    result.records.resize(dataset.size());
    parallel_for(dataset.size(), env.concurrency, [&](std::size_t i) {
        const Dialogue& sample = dataset[i];
        auto s = valid_response(s_traces, sample.id);
        std::optional<std::string> o;
        if (ground_truth) {
            if (sample.ground_truth && !text::is_blank(*sample.ground_truth)) o = sample.ground_truth;
        } else {
            o = valid_response(o_traces, sample.id);
        }
        if (!s || !o) {
            result.records[i] =
                eval::invalid_record(sample.id, options.metric, options.order, !s, !o, judge);
            return;
        }
        try {
            result.records[i] = eval::judge_pair(sample, *s, *o, options.metric, options.order,
                                                 *env.client, params, *env.store);
        } catch (const BackendError& e) {
            if (e.retryable()) throw;
            eval::JudgmentRecord rec;
            rec.sample_id = sample.id;
            rec.metric = options.metric;
            rec.order = options.order;
            rec.judge = judge;
            rec.outcome = eval::Outcome::Unparseable;
            rec.raw = e.what();
            rec.temperature = params.temperature;
            rec.top_p = params.top_p;
            result.records[i] = std::move(rec);
        }
    });

    // Written first so a run with nothing countable still keeps its records.
    atomic_write(result.run_dir / "judgments.jsonl", to_jsonl<eval::JudgmentRecord>(result.records));
    result.valid_only = eval::win_rate(result.records, eval::DenominatorPolicy::ValidOnly);
    result.all = eval::win_rate(result.records, eval::DenominatorPolicy::All);
    if (ground_truth) {
        AutoMetrics m;
        for (const auto& sample : dataset) {
            auto s = valid_response(s_traces, sample.id);
            if (!s || !sample.ground_truth) continue;
            m.avg_bleu += eval::avg_bleu(*s, *sample.ground_truth);
            m.f1 += eval::token_f1(*s, *sample.ground_truth);
            ++m.n;
        }
        if (m.n > 0) {
            m.avg_bleu /= static_cast<double>(m.n);
            m.f1 /= static_cast<double>(m.n);
            result.metrics = m;
        }
    }

    json summary = {{"run_id", options.run_id},
                    {"run_s", options.run_s},
                    {"baseline", options.baseline},
                    {"method", method_label(manifest)},
                    {"dataset", dataset_name(manifest.dataset_path)},
                    {"metric", to_string(options.metric)},
                    {"order", to_string(options.order)},
                    {"samples", dataset.size()},
                    {"valid_only", result.valid_only},
                    {"all", result.all}};
    if (result.metrics) {
        summary["auto_metrics"] = {{"avg_bleu", result.metrics->avg_bleu},
                                   {"f1", result.metrics->f1},
                                   {"n", result.metrics->n}};
    }
    atomic_write(result.run_dir / "summary.json", summary.dump(2) + "\n");
    Report one = cmd_report({{options.run_id}, {}}, env.runs_dir);
    atomic_write(result.run_dir / "report.tsv", one.win_rate_grid);
    return result;
}

Report cmd_report(const ReportOptions& options, const fs::path& runs_dir) {
    struct Row {
        RunManifest manifest;
        std::vector<eval::JudgmentRecord> records;
        eval::WinRateReport valid_only;
        eval::WinRateReport all;
    };
    std::vector<Row> rows;
    for (const auto& id : options.eval_runs) {
        Row row;
        row.manifest = read_evaluate_manifest(runs_dir, id);
        row.records = read_judgments(runs_dir / id);
        row.valid_only = eval::win_rate(row.records, eval::DenominatorPolicy::ValidOnly);
        row.all = eval::win_rate(row.records, eval::DenominatorPolicy::All);
        rows.push_back(std::move(row));
    }

    Report report;
    std::ostringstream grid;
    grid << "run\tdataset\tmethod\tbaseline\tmetric\torder\twins\tties\tloses\tjudged\tinvalid"
            "\tunparseable\twin_rate\twin_rate_all\n";
    json summary_rows = json::array();
    for (const auto& row : rows) {
        const auto& m = row.manifest;
        grid << m.run_id << '\t' << dataset_name(m.dataset_path) << '\t' << method_label(m) << '\t'
             << m.baseline << '\t' << to_string(m.metric) << '\t' << to_string(m.order) << '\t'
             << row.valid_only.wins << '\t' << row.valid_only.ties << '\t' << row.valid_only.loses
             << '\t' << row.valid_only.judged() << '\t' << row.valid_only.n_invalid << '\t'
             << row.valid_only.n_unparseable << '\t' << fmt_rate(row.valid_only.rate) << '\t'
             << fmt_rate(row.all.rate) << '\n';
        summary_rows.push_back({{"run", m.run_id},
                                {"dataset", dataset_name(m.dataset_path)},
                                {"method", method_label(m)},
                                {"baseline", m.baseline},
                                {"metric", to_string(m.metric)},
                                {"order", to_string(m.order)},
                                {"valid_only", row.valid_only},
                                {"all", row.all}});
    }
    report.win_rate_grid = grid.str();

    // Pair OS and SO evaluations of the same comparison.
    std::vector<eval::OrderBiasInput> inputs;
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<const Row*, const Row*>>
        groups;
    for (const auto& row : rows) {
        const auto& m = row.manifest;
        auto& slot = groups[{m.run_s, m.baseline, std::string(to_string(m.metric))}];
        (m.order == Order::OS ? slot.first : slot.second) = &row;
    }
    for (const auto& [key, pair] : groups) {
        if (!pair.first || !pair.second) continue;
        const auto& m = pair.first->manifest;
        eval::OrderBiasInput in;
        in.method = method_label(m);
        in.dataset = dataset_name(m.dataset_path);
        in.metric = m.metric;
        in.records_os = pair.first->records;
        in.records_so = pair.second->records;
        std::set<std::string> ids;
        for (const auto& r : in.records_os) ids.insert(r.sample_id);
        for (const auto& h : options.human) {
            if (h.metric == m.metric && ids.count(h.sample_id)) in.human.push_back(h);
        }
        inputs.push_back(std::move(in));
    }
    json order_summary = json::array();
    if (!inputs.empty()) {
        auto cells = eval::order_bias_report(inputs);
        report.order_grid = eval::format_alignment_table(cells);
        order_summary = eval::to_json_summary(cells);
    }
    report.summary = {{"runs", summary_rows}, {"order_bias", order_summary}};
    return report;
}

eval::AlignmentCell cmd_agree(const std::string& eval_run, std::span<const eval::HumanLabel> human,
                              const fs::path& runs_dir) {
    auto m = read_evaluate_manifest(runs_dir, eval_run);
    auto records = read_judgments(runs_dir / eval_run);
    return eval::alignment_cell(method_label(m), dataset_name(m.dataset_path), m.metric, m.order,
                                records, human);
}

std::vector<annotation::PairSource> annotation_pairs(const std::string& eval_run, std::size_t limit,
                                                     std::uint64_t seed, const fs::path& runs_dir) {
    auto m = read_evaluate_manifest(runs_dir, eval_run);
    auto dataset = load_checked_dataset(m);
    auto records = read_judgments(runs_dir / eval_run);
    auto s_traces = index_traces(read_traces(runs_dir / m.run_s));
    std::map<std::string, pipeline::ReasoningTrace> o_traces;
    const bool ground_truth = m.baseline == kGroundTruth;
    if (!ground_truth) o_traces = index_traces(read_traces(runs_dir / m.baseline));

    std::set<std::string> judged;
    for (const auto& r : records) {
        if (r.outcome == eval::Outcome::Judged) judged.insert(r.sample_id);
    }
    std::vector<annotation::PairSource> pairs;
    for (const auto& sample : dataset) {
        if (!judged.count(sample.id)) continue;
        auto s = valid_response(s_traces, sample.id);
        auto o = ground_truth ? sample.ground_truth : valid_response(o_traces, sample.id);
        if (!s || !o) continue;
        pairs.push_back({sample.id, m.metric, sample, *s, *o});
    }
    if (limit > 0 && pairs.size() > limit) {
        std::vector<std::size_t> idx(pairs.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng(derive_seed(seed, "annotation-sample/" + eval_run)).shuffle(idx.begin(), idx.end());
        idx.resize(limit);
        std::sort(idx.begin(), idx.end());
        std::vector<annotation::PairSource> picked;
        for (auto i : idx) picked.push_back(std::move(pairs[i]));
        pairs = std::move(picked);
    }
    return pairs;
}

std::vector<eval::HumanLabel> read_labels(const fs::path& path) {
    auto labels = read_jsonl<eval::HumanLabel>(path);
    for (const auto& l : labels) {
        if (l.value != 1 && l.value != -1) {
            throw ValidationError("human label for '" + l.sample_id + "' must be 1 or -1");
        }
    }
    return labels;
}

void write_labels(const fs::path& path, std::span<const eval::HumanLabel> labels) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    atomic_write(path, to_jsonl<eval::HumanLabel>(labels));
}

}  // namespace cuecot::harness
