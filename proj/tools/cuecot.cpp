// cuecot: command-line front end for corpus preparation, generation,
// judging, reporting, and the annotation service.

#include "cuecot/annotation.hpp"
#include "cuecot/corpus.hpp"
#include "cuecot/error.hpp"
#include "cuecot/harness.hpp"
#include "cuecot/pipeline.hpp"
#include "cuecot/selection.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cuecot;

namespace {

struct Globals {
    std::string backend = "mock";
    std::string mock_script;
    std::string cache_dir;
    std::string templates;
    std::string base_url;
    std::string runs_dir = "runs";
    std::uint64_t seed = 0;
    int concurrency = 4;
    int context_limit = 0;
};

std::unique_ptr<prompts::TemplateStore> g_custom_store;
annotation::AnnotationServer* g_server = nullptr;

const prompts::TemplateStore& template_store(const Globals& g) {
    if (g.templates.empty()) return prompts::TemplateStore::bundled();
    if (!g_custom_store) {
        g_custom_store = std::make_unique<prompts::TemplateStore>(prompts::TemplateStore::load(g.templates));
    }
    return *g_custom_store;
}

json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

harness::Environment make_env(const Globals& g) {
    harness::Environment env;
    env.profile = harness::backend_profile(g.backend);
    if (g.context_limit > 0) env.profile.context_limit = g.context_limit;
    std::shared_ptr<llm::ChatBackend> backend;
    if (env.profile.remote) {
        if (g.base_url.empty()) throw ValidationError("--base-url is required for backend " + g.backend);
        backend = std::make_shared<llm::HttpBackend>(llm::HttpConfig{g.base_url});
    } else if (!g.mock_script.empty()) {
        backend = llm::MockBackend::from_json(read_json(g.mock_script));
    } else {
        backend = llm::MockBackend::synthetic();
    }
    std::shared_ptr<llm::CompletionCache> cache;
    if (g.cache_dir.empty()) {
        cache = std::make_shared<llm::MemoryCache>();
    } else {
        cache = std::make_shared<llm::DiskCache>(g.cache_dir);
    }
    env.client = std::make_shared<llm::LlmClient>(backend, cache, llm::RetryPolicy{}, g.concurrency);
    env.store = &template_store(g);
    env.runs_dir = g.runs_dir;
    env.concurrency = g.concurrency;
    return env;
}

llm::GenerationParams gen_params(const harness::Environment& env) {
    return llm::generation_params(env.profile.model, env.profile.context_limit);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string_view polarity_name(const std::optional<corpus::Polarity>& p) {
    if (!p) return "unknown";
    switch (*p) {
        case corpus::Polarity::Positive: return "positive";
        case corpus::Polarity::Negative: return "negative";
        case corpus::Polarity::Neutral: return "neutral";
    }
    return "unknown";
}

void print_win_rate(const char* label, const eval::WinRateReport& r) {
    std::cout << label << "\twins " << r.wins << "\tties " << r.ties << "\tloses " << r.loses
              << "\tjudged " << r.judged() << "\tinvalid " << r.n_invalid << "\tunparseable "
              << r.n_unparseable << "\twin_rate " << fixed(r.rate, 3) << '\n';
}

void print_agreement(const eval::AlignmentCell& cell) {
    std::cout << "method\t" << cell.method << "\norder\t" << to_string(cell.order) << "\nexcluded\t"
              << cell.n_excluded << '\n';
    if (!cell.pooled) {
        std::cout << "pooled\t-\n";
        return;
    }
    std::cout << "pooled\tacc " << fixed(cell.pooled->accuracy, 4) << "\tkappa "
              << fixed(cell.pooled->kappa, 4) << "\tn " << cell.pooled->n << '\n';
    for (const auto& [who, a] : cell.per_annotator) {
        std::cout << who << "\tacc " << fixed(a.accuracy, 4) << "\tkappa " << fixed(a.kappa, 4)
                  << "\tn " << a.n << '\n';
    }
    std::cout << "annotator_mean\tacc " << fixed(cell.annotator_mean->accuracy, 4) << "\tkappa "
              << fixed(cell.annotator_mean->kappa, 4) << '\n';
}

void handle_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linguistic-cue chain-of-thought dialogue workbench"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--backend", g.backend, "Backend profile: mock, belle, alpaca, chatgpt")
        ->capture_default_str();
    app.add_option("--mock-script", g.mock_script, "JSON script for the mock backend");
    app.add_option("--cache-dir", g.cache_dir, "Completion cache directory");
    app.add_option("--seed", g.seed, "Seed for selection and sampling")->capture_default_str();
    app.add_option("--concurrency", g.concurrency, "Parallel requests")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--templates", g.templates, "Template directory");
    app.add_option("--base-url", g.base_url, "Chat-completion endpoint base URL");
    app.add_option("--context-limit", g.context_limit, "Override the profile's context window");
    app.add_option("--runs-dir", g.runs_dir, "Directory holding run directories")
        ->capture_default_str();

    std::function<int()> action;

    // corpus
    auto* corpus_cmd = app.add_subcommand("corpus", "Dataset preparation");
    corpus_cmd->require_subcommand(1);

    std::string data_path, descriptor;
    bool as_json = false;
    auto* stats = corpus_cmd->add_subcommand("stats", "Dataset statistics");
    stats->add_option("--data", data_path, "Dataset file")->required();
    stats->add_option("--descriptor", descriptor, "Source descriptor for records without one");
    stats->add_flag("--json", as_json, "Print JSON");
    stats->callback([&] {
        action = [&] {
            auto s = corpus::compute_stats(corpus::load_dataset(data_path, descriptor));
            if (as_json) {
                std::cout << json(s).dump(2) << '\n';
            } else {
                std::cout << "samples\twith_response\tavg_context\tavg_response\tunit\n"
                          << s.samples << '\t' << s.with_response << '\t'
                          << fixed(s.avg_context_len, 1) << '\t' << fixed(s.avg_response_len, 1)
                          << '\t' << corpus::to_string(s.unit) << '\n';
            }
            return 0;
        };
    });

    std::string in_path, out_path;
    auto* d4 = corpus_cmd->add_subcommand("extract-d4", "Pick D4 ground-truth responses");
    d4->add_option("--in", in_path, "Raw dialogues")->required();
    d4->add_option("--out", out_path, "Benchmark output")->required();
    d4->callback([&] {
        action = [&] {
            std::vector<Dialogue> out;
            std::size_t skipped = 0;
            for (const auto& d : corpus::load_dataset(in_path, "d4")) {
                try {
                    out.push_back(corpus::to_d4_benchmark(d));
                } catch (const ValidationError& e) {
                    ++skipped;
                    std::cerr << "skip " << d.id << ": " << e.what() << '\n';
                }
            }
            corpus::save_dataset(out_path, out);
            std::cout << "kept " << out.size() << "\tskipped " << skipped << '\n';
            return 0;
        };
    });

    std::string seeds_path, personas_path;
    auto* persona = corpus_cmd->add_subcommand("build-persona", "Build persona dialogues from QA seeds");
    persona->add_option("--seeds", seeds_path, "Seed QA file")->required();
    persona->add_option("--out", out_path, "Dialogue output")->required();
    persona->add_option("--personas", personas_path, "Persona sidecar (default <out>.personas.jsonl)");
    persona->callback([&] {
        action = [&] {
            auto env = make_env(g);
            auto params = gen_params(env);
            std::vector<Dialogue> dialogues;
            std::ostringstream sidecar;
            std::size_t failed = 0;
            for (const auto& seed : corpus::load_seeds(seeds_path)) {
                try {
                    auto p = corpus::infer_persona(seed, *env.client, params, *env.store);
                    auto d = corpus::continue_dialogue(seed, p, *env.client, params, *env.store);
                    dialogues.push_back(corpus::split_last_response(std::move(d)));
                    sidecar << json{{"id", seed.id}, {"persona", p.text}, {"polarity", polarity_name(p.polarity)}}.dump()
                            << '\n';
                } catch (const ValidationError& e) {
                    ++failed;
                    std::cerr << "skip " << seed.id << ": " << e.what() << '\n';
                }
            }
            corpus::save_dataset(out_path, dialogues);
            fs::path side = personas_path.empty() ? fs::path(out_path + ".personas.jsonl") : fs::path(personas_path);
            std::ofstream(side, std::ios::binary | std::ios::trunc) << sidecar.str();
            std::cout << "built " << dialogues.size() << "\tskipped " << failed << '\n';
            return 0;
        };
    });

    std::string pool_path;
    auto* annotate_pool = corpus_cmd->add_subcommand("annotate-pool", "Fill missing pool statuses");
    annotate_pool->add_option("--pool", pool_path, "Demonstration pool")->required();
    annotate_pool->add_option("--out", out_path, "Annotated pool")->required();
    annotate_pool->callback([&] {
        action = [&] {
            auto env = make_env(g);
            auto pool = pipeline::annotate_pool_status(selection::load_pool(pool_path), *env.client,
                                                       gen_params(env), *env.store);
            selection::save_pool(out_path, pool);
            std::cout << "annotated " << pool.size() << '\n';
            return 0;
        };
    });

    std::size_t per_group = 0;
    std::string group_by = "source";
    auto* sample = corpus_cmd->add_subcommand("sample", "Draw a fixed number of samples per group");
    sample->add_option("--in", in_path, "Dataset")->required();
    sample->add_option("--out", out_path, "Output")->required();
    sample->add_option("--per-group", per_group, "Samples per group")->required();
    sample->add_option("--group-by", group_by, "source or language")
        ->check(CLI::IsMember({"source", "language"}))
        ->capture_default_str();
    sample->callback([&] {
        action = [&] {
            auto data = corpus::load_dataset(in_path);
            auto picked = corpus::sample_per_group(data, per_group, g.seed, [&](const Dialogue& d) {
                return group_by == "source" ? d.source : std::string(to_string(d.language));
            });
            corpus::save_dataset(out_path, picked);
            std::cout << "sampled " << picked.size() << '\n';
            return 0;
        };
    });

    // generate
    harness::GenerateOptions gen;
    std::string scheme = "standard", variant = "process_a", strategy = "top1", planning_key = "by_status";
    std::optional<int> max_tokens;
    std::string gen_pool;
    std::size_t stop_after = 0;
    auto* generate = app.add_subcommand("generate", "Generate responses for a dataset");
    generate->add_option("--run-id", gen.run_id, "Run id")->required();
    generate->add_option("--data", data_path, "Dataset file")->required();
    generate->add_option("--scheme", scheme, "standard, o_cue, m_cue")->capture_default_str();
    generate->add_option("--variant", variant, "process_a, process_b, process_c")->capture_default_str();
    generate->add_option("--shots", gen.scheme.shots, "Demonstrations per step (0 or 1)")
        ->capture_default_str();
    generate->add_option("--selection", strategy, "random or top1")->capture_default_str();
    generate->add_option("--planning-key", planning_key, "by_status or by_context")->capture_default_str();
    generate->add_option("--pool", gen_pool, "Demonstration pool");
    generate->add_option("--max-tokens", max_tokens, "Output token cap");
    generate->add_option("--stop-after", stop_after, "Stop after N samples (resumable)");
    generate->add_flag("--force", gen.force, "Replace a run with a different manifest");
    generate->callback([&] {
        action = [&] {
            auto env = make_env(g);
            gen.dataset = data_path;
            if (!gen_pool.empty()) gen.pool = gen_pool;
            if (stop_after > 0) gen.stop_after = stop_after;
            gen.scheme.scheme = pipeline::parse_scheme(scheme);
            gen.scheme.variant = pipeline::parse_variant(variant);
            gen.scheme.selection = pipeline::parse_selection(strategy);
            if (planning_key != "by_context" && planning_key != "by_status") {
                throw ValidationError("--planning-key must be by_status or by_context");
            }
            gen.scheme.planning_demo_key = planning_key == "by_context"
                                               ? selection::SelectionKey::ByContext
                                               : selection::SelectionKey::ByStatus;
            gen.scheme.seed = g.seed;
            gen.scheme.gen_params = gen_params(env);
            gen.scheme.gen_params.max_tokens = max_tokens;
            auto r = harness::cmd_generate(gen, env);
            std::cout << "run\t" << r.run_dir.string() << "\nsamples\t" << r.samples << "\ncompleted\t"
                      << r.completed << "\nvalid\t" << r.valid << "\ninvalid\t" << r.completed - r.valid
                      << '\n';
            for (const auto& [reason, n] : r.invalid_reasons) std::cout << "  " << reason << '\t' << n << '\n';
            if (!r.finished) std::cout << "partial run; rerun the same command to resume\n";
            return 0;
        };
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Judging and agreement");
    eval_cmd->require_subcommand(1);
    harness::EvaluateOptions ev;
    std::string metric = "helpfulness", order = "OS";
    auto* judge = eval_cmd->add_subcommand("judge", "Pairwise LLM judging of two runs");
    judge->add_option("--run-id", ev.run_id, "Evaluation run id")->required();
    judge->add_option("--run", ev.run_s, "Run whose responses are S")->required();
    judge->add_option("--baseline", ev.baseline, "Baseline run id or 'ground-truth'")->required();
    judge->add_option("--metric", metric, "helpfulness or acceptability")->capture_default_str();
    judge->add_option("--order", order, "OS (baseline in slot A) or SO")->capture_default_str();
    judge->add_flag("--force", ev.force, "Replace a run with a different manifest");
    judge->callback([&] {
        action = [&] {
            auto env = make_env(g);
            ev.metric = parse_metric(metric);
            ev.order = parse_order(order);
            auto r = harness::cmd_evaluate(ev, env);
            print_win_rate("valid_only", r.valid_only);
            print_win_rate("all", r.all);
            if (r.metrics) {
                std::cout << "avg_bleu\t" << fixed(r.metrics->avg_bleu, 4) << "\nf1\t"
                          << fixed(r.metrics->f1, 4) << "\nn\t" << r.metrics->n << '\n';
            }
            return 0;
        };
    });

    std::string human_path, machine_run;
    auto* agree = eval_cmd->add_subcommand("agree", "Agreement of machine judgments with human labels");
    agree->add_option("--human", human_path, "Human label file")->required();
    agree->add_option("--machine", machine_run, "Evaluation run id")->required();
    agree->add_flag("--json", as_json, "Print JSON");
    agree->callback([&] {
        action = [&] {
            auto labels = harness::read_labels(human_path);
            auto cell = harness::cmd_agree(machine_run, labels, g.runs_dir);
            if (as_json) {
                std::cout << eval::to_json_summary(std::span<const eval::AlignmentCell>(&cell, 1)).dump(2) << '\n';
            } else {
                print_agreement(cell);
            }
            return 0;
        };
    });

    // report
    harness::ReportOptions rep;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Win-rate and order-bias tables");
    report->add_option("--eval", rep.eval_runs, "Evaluation run ids")->required();
    report->add_option("--human", human_path, "Human label file");
    report->add_option("--out", report_out, "Directory for report files");
    report->callback([&] {
        action = [&] {
            if (!human_path.empty()) rep.human = harness::read_labels(human_path);
            auto r = harness::cmd_report(rep, g.runs_dir);
            std::cout << r.win_rate_grid;
            if (!r.order_grid.empty()) std::cout << '\n' << r.order_grid;
            if (!report_out.empty()) {
                fs::create_directories(report_out);
                std::ofstream(fs::path(report_out) / "win_rates.tsv") << r.win_rate_grid;
                std::ofstream(fs::path(report_out) / "order_bias.tsv") << r.order_grid;
                std::ofstream(fs::path(report_out) / "report.json") << r.summary.dump(2) << '\n';
            }
            return 0;
        };
    });

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Blinded human annotation");
    annotate->require_subcommand(1);
    std::string store_dir, eval_run, host = "127.0.0.1", static_dir;
    std::vector<std::string> annotators;
    std::size_t sample_n = 100;
    int port = 8080;
    auto* serve = annotate->add_subcommand("serve", "Serve the annotation API");
    serve->add_option("--dir", store_dir, "Annotation state directory")->required();
    serve->add_option("--eval", eval_run, "Evaluation run to draw pairs from (new stores only)");
    serve->add_option("--sample", sample_n, "Pairs to draw; 0 takes all")->capture_default_str();
    serve->add_option("--annotators", annotators, "Annotator ids")->delimiter(',');
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port")->capture_default_str();
    serve->add_option("--static", static_dir, "UI bundle directory served at /");
    serve->callback([&] {
        action = [&] {
            std::unique_ptr<annotation::AnnotationStore> store;
            if (fs::exists(fs::path(store_dir) / "meta.json")) {
                store = annotation::AnnotationStore::open(store_dir);
            } else {
                if (eval_run.empty()) throw ValidationError("--eval is required to create a new store");
                annotation::StoreConfig cfg;
                cfg.seed = g.seed;
                if (!annotators.empty()) cfg.annotators = annotators;
                store = annotation::AnnotationStore::create(
                    store_dir, harness::annotation_pairs(eval_run, sample_n, g.seed, g.runs_dir), cfg);
            }
            std::optional<fs::path> ui;
            if (!static_dir.empty()) ui = static_dir;
            annotation::AnnotationServer server(*store, ui);
            int bound = server.bind(host, port);
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            std::cout << "listening on http://" << host << ':' << bound << std::endl;
            server.serve();
            g_server = nullptr;
            return 0;
        };
    });

    auto* export_cmd = annotate->add_subcommand("export", "Write S-relative human labels");
    export_cmd->add_option("--dir", store_dir, "Annotation state directory")->required();
    export_cmd->add_option("--out", out_path, "Label file")->required();
    export_cmd->callback([&] {
        action = [&] {
            auto store = annotation::AnnotationStore::open(store_dir);
            auto labels = store->export_labels();
            harness::write_labels(out_path, labels);
            std::cout << "exported " << labels.size() << '\n';
            return 0;
        };
    });

    auto* requeue = annotate->add_subcommand("requeue", "Open a round of machine-tied pairs");
    requeue->add_option("--dir", store_dir, "Annotation state directory")->required();
    requeue->add_option("--eval", eval_run, "Evaluation run holding the machine judgments")->required();
    requeue->callback([&] {
        action = [&] {
            auto store = annotation::AnnotationStore::open(store_dir);
            auto records = harness::read_judgments(fs::path(g.runs_dir) / eval_run);
            auto round = store->requeue_ties(records);
            std::cout << "round " << round.number << "\tpairs " << round.pair_ids.size() << '\n';
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action ? action() : 0;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConflictError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
