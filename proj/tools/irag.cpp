// irag command line: ingest, index, query, serve, eval, derange.
// Exit codes: 0 success, 1 user error, 2 environment error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "irag/chunking.hpp"
#include "irag/config.hpp"
#include "irag/errors.hpp"
#include "irag/eval.hpp"
#include "irag/explanation.hpp"
#include "irag/ingest.hpp"
#include "irag/service.hpp"
#include "irag/util.hpp"
#include "irag/vector_index.hpp"

namespace {

using namespace irag;
using nlohmann::json;

constexpr int kUserError = 1;
constexpr int kEnvError = 2;

/// Gateway and pipeline flags shared by the subcommands that talk to models.
struct ModelFlags {
    std::string gateway;
    std::string playbook;
    std::string chat_model;
    std::string embed_model;
    std::string judge_model;
    double timeout_s = 0;
    std::string rerank;
    double abstain_threshold = -1;

    void add(CLI::App* sub) {
        sub->add_option("--gateway", gateway, "http(s)://host:port or mock:<seed>[:<dim>]");
        sub->add_option("--playbook", playbook, "Mock gateway playbook (JSON)");
        sub->add_option("--chat-model", chat_model, "Chat model name");
        sub->add_option("--embed-model", embed_model, "Embedding model name");
        sub->add_option("--judge-model", judge_model, "Judge model name");
        sub->add_option("--timeout", timeout_s, "Gateway timeout in seconds");
        sub->add_option("--rerank", rerank, "Rerank mode: judge, external or none");
        sub->add_option("--abstain-threshold", abstain_threshold, "Minimum top relevance to answer");
    }

    void apply(AppConfig& cfg) const {
        if (!gateway.empty()) cfg.gateway.url = gateway;
        if (!playbook.empty()) cfg.gateway.playbook_path = playbook;
        if (!chat_model.empty()) cfg.gateway.chat_model = chat_model;
        if (!embed_model.empty()) cfg.gateway.embed_model = embed_model;
        if (!judge_model.empty()) cfg.gateway.judge_model = judge_model;
        if (timeout_s > 0) cfg.gateway.timeout_s = timeout_s;
        if (!rerank.empty()) cfg.generation.retrieval.rerank_mode = parse_rerank_mode(rerank);
        if (abstain_threshold >= 0) cfg.generation.abstain_threshold = abstain_threshold;
    }
};

bool is_mock(const AppConfig& cfg) { return cfg.gateway.url.rfind("mock:", 0) == 0; }

/// Mock runs use a fixed clock so their output is byte-stable.
void pin_clock_for_mock(AppConfig& cfg) {
    if (is_mock(cfg)) cfg.generation.clock = [] { return Timestamp{}; };
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        std::cout.flush();
    } else {
        write_file(out_path, text);
    }
}

ExportFormat infer_format(const std::string& path, const std::string& flag) {
    if (!flag.empty()) return parse_export_format(flag);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return ExportFormat::csv;
    return ExportFormat::json_lines;
}

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("irag");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"Grounded question answering over issue-tracker exports"};
    app.require_subcommand(1);
    std::string config_path = "irag.toml";
    int verbosity = 0;
    app.add_option("--config", config_path, "Config file (TOML); optional when left at the default");
    app.add_flag("-v,--verbose", verbosity, "More logging (repeat for debug)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse and filter an issue export into a corpus");
    std::string ingest_in, ingest_format, ingest_out;
    FilterPolicy policy;
    bool include_open = false, keep_duplicates = false;
    ingest->add_option("--in", ingest_in, "Export file (csv or JSON lines)")->required();
    ingest->add_option("--format", ingest_format, "csv or jsonl (default: from extension)");
    ingest->add_option("--out", ingest_out, "corpus.jsonl to write")->required();
    ingest->add_option("--min-chars", policy.min_chars, "Minimum normalized text length");
    ingest->add_flag("--include-open", include_open, "Keep open issues");
    ingest->add_flag("--keep-duplicates", keep_duplicates, "Keep repeated issue ids");

    // index build
    auto* index = app.add_subcommand("index", "Vector index commands");
    index->require_subcommand(1);
    auto* build = index->add_subcommand("build", "Chunk and embed a corpus");
    std::string build_corpus, build_out;
    std::size_t chunk_size = 0, overlap = 0, batch_size = 0;
    bool overlap_set = false;
    ModelFlags build_flags;
    build->add_option("--corpus", build_corpus, "corpus.jsonl from ingest")->required();
    build->add_option("--out", build_out, "Index file to write")->required();
    build->add_option("--chunk-size", chunk_size, "Chunk size in characters");
    build->add_option("--overlap", overlap, "Chunk overlap in characters")->each([&](const std::string&) {
        overlap_set = true;
    });
    build->add_option("--batch-size", batch_size, "Texts per embedding request");
    build_flags.add(build);

    // query
    auto* query = app.add_subcommand("query", "Answer one question and print the result JSON");
    std::string query_index, query_text;
    bool show_trace = false;
    ModelFlags query_flags;
    query->add_option("--index", query_index, "Index file");
    query->add_option("--q,--query", query_text, "Question")->required();
    query->add_flag("--trace", show_trace, "Print the retrieval trace to stderr");
    query_flags.add(query);

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::string serve_index, serve_listen;
    std::vector<std::string> cors;
    ModelFlags serve_flags;
    serve->add_option("--index", serve_index, "Index file");
    serve->add_option("--listen", serve_listen, "host:port");
    serve->add_option("--cors", cors, "Allowed browser origin (repeatable)");
    serve_flags.add(serve);

    // eval
    auto* eval = app.add_subcommand("eval", "Run the judge-based evaluation");
    std::string eval_dataset, eval_index, eval_format = "markdown", eval_out;
    int runs = 0;
    std::uint64_t seed = 17;
    bool eval_derange = false;
    std::vector<std::string> models;
    std::vector<std::string> metric_tags;
    ModelFlags eval_flags;
    eval->add_option("--dataset", eval_dataset, "QA pairs (JSON lines)")->required();
    eval->add_option("--index", eval_index, "Index file");
    eval->add_option("--runs", runs, "Runs per question (default 3)");
    eval->add_option("--seed", seed, "Seed recorded in the report and used by --derange");
    eval->add_flag("--derange", eval_derange, "Shuffle reference answers first (robustness dataset)");
    eval->add_option("--model", models, "Chat model to evaluate (repeatable; one report row each)");
    eval->add_option("--metrics", metric_tags, "Subset of metrics")->delimiter(',');
    eval->add_option("--format", eval_format, "markdown, csv or json");
    eval->add_option("--out", eval_out, "Report file (default stdout)");
    eval_flags.add(eval);

    // derange
    auto* der = app.add_subcommand("derange", "Build a robustness dataset by mismatching references");
    std::string der_in, der_out;
    std::uint64_t der_seed = 0;
    der->add_option("--in", der_in, "QA pairs (JSON lines)")->required();
    der->add_option("--seed", der_seed, "Shuffle seed")->required();
    der->add_option("--out", der_out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUserError;
    }
    if (verbosity == 1) spdlog::set_level(spdlog::level::info);
    if (verbosity >= 2) spdlog::set_level(spdlog::level::debug);

    try {
        const bool explicit_config = app.count("--config") > 0;
        AppConfig cfg = load_config(config_path, explicit_config);

        if (*ingest) {
            const auto raw = read_file(ingest_in);
            auto parsed = parse_issue_export(raw, infer_format(ingest_in, ingest_format));
            for (const auto& reason : parsed.skip_reasons) spdlog::info("skipped: {}", reason);
            std::vector<IssueRecord> normalized;
            for (auto& r : parsed.records) normalized.push_back(normalize_issue(std::move(r)));
            policy.closed_only = !include_open;
            policy.drop_duplicate_ids = !keep_duplicates;
            const auto kept = filter_issues(normalized, policy);
            const auto docs = to_documents(kept);
            write_file(ingest_out, write_corpus(docs));
            std::cerr << "parsed " << normalized.size() << ", skipped " << parsed.skipped << ", kept " << kept.size()
                      << " -> " << ingest_out << "\n";
            return 0;
        }

        if (*build) {
            build_flags.apply(cfg);
            if (chunk_size > 0) cfg.chunking.chunk_size = chunk_size;
            if (overlap_set) cfg.chunking.overlap = overlap;
            if (batch_size > 0) cfg.build.batch_size = batch_size;
            const auto docs = read_corpus(read_file(build_corpus));
            std::vector<Chunk> chunks;
            for (const auto& d : docs) {
                auto cs = chunk_document(d, cfg.chunking);
                chunks.insert(chunks.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
            }
            auto gateway = make_gateway(cfg.gateway);
            const auto idx = build_index(chunks, *gateway, cfg.build);
            save_index(idx, build_out);
            std::cerr << docs.size() << " documents, " << idx.size() << " chunks, dimension " << idx.dimension()
                      << " -> " << build_out << "\n";
            return 0;
        }

        if (*query) {
            query_flags.apply(cfg);
            pin_clock_for_mock(cfg);
            if (!query_index.empty()) cfg.index_path = query_index;
            if (cfg.index_path.empty()) throw ConfigError("--index is required");
            const auto idx = load_index(cfg.index_path);
            auto gateway = make_gateway(cfg.gateway);
            const auto out = run_pipeline(query_text, idx, *gateway, cfg.generation);
            if (show_trace) std::cerr << to_json(out.context).dump(2) << "\n";
            std::cout << to_json(out.result).dump(2) << "\n";
            return 0;
        }

        if (*serve) {
            serve_flags.apply(cfg);
            if (!serve_index.empty()) cfg.index_path = serve_index;
            if (!serve_listen.empty()) cfg.service.listen = serve_listen;
            if (!cors.empty()) cfg.service.cors_origins = cors;
            if (cfg.index_path.empty()) throw ConfigError("--index is required");
            auto idx = std::make_shared<const VectorIndex>(load_index(cfg.index_path));
            auto gateway = make_gateway(cfg.gateway);
            const auto [host, port] = parse_listen_address(cfg.service.listen);
            ExplainService service(idx, *gateway, cfg.generation, cfg.service);
            HttpServer server(service);
            const int bound = server.bind(host, port);
            g_server.store(&server);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::set_level(std::min(spdlog::get_level(), spdlog::level::info));
            spdlog::info("serving {} chunks on {}:{}", idx->size(), host, bound);
            server.run();
            g_server.store(nullptr);
            spdlog::info("stopped");
            return 0;
        }

        if (*eval) {
            eval_flags.apply(cfg);
            pin_clock_for_mock(cfg);
            if (!eval_index.empty()) cfg.index_path = eval_index;
            if (cfg.index_path.empty()) throw ConfigError("--index is required");
            const auto format = parse_report_format(eval_format);
            auto dataset = load_dataset(eval_dataset);
            if (eval_derange) dataset = derange(dataset, seed);
            const auto idx = load_index(cfg.index_path);

            EvalConfig ecfg;
            if (runs != 0) ecfg.runs = runs;
            ecfg.seed = seed;
            if (!metric_tags.empty()) {
                ecfg.metrics.clear();
                for (const auto& m : metric_tags) ecfg.metrics.push_back(parse_metric(m));
            }
            if (models.empty()) models.push_back(cfg.gateway.chat_model);

            std::vector<EvalReport> reports;
            for (const auto& model : models) {
                auto settings = cfg.gateway;
                settings.chat_model = model;
                auto gateway = make_gateway(settings);
                const auto& r = cfg.generation.retrieval;
                ecfg.model = gateway->chat_model();
                ecfg.snapshot = {{"dataset", eval_dataset},
                                 {"deranged", eval_derange},
                                 {"gateway", settings.url},
                                 {"embedder_id", idx.embedder_id()},
                                 {"index_checksum", index_checksum(idx)},
                                 {"abstain_threshold", cfg.generation.abstain_threshold},
                                 {"generation_temperature", cfg.generation.temperature},
                                 {"retrieval",
                                  {{"rewrites", r.rewrites},
                                   {"k_per_query", r.k_per_query},
                                   {"final_k", r.final_k},
                                   {"rerank", to_string(r.rerank_mode)}}}};
                Pipeline pipeline = [&](const std::string& q) {
                    return run_pipeline(q, idx, *gateway, cfg.generation);
                };
                reports.push_back(run_evaluation(dataset, pipeline, *gateway, ecfg));
            }
            emit(eval_out, render_report(reports, format));
            return 0;
        }

        if (*der) {
            const auto pairs = load_dataset(der_in);
            emit(der_out, write_dataset(derange(pairs, der_seed)));
            return 0;
        }
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kUserError;
    } catch (const PreconditionError& e) {
        spdlog::error("{}", e.what());
        return kUserError;
    } catch (const ParseError& e) {
        spdlog::error("{}", e.what());
        return kUserError;
    } catch (const LoadError& e) {
        spdlog::error("{}", e.what());
        return kUserError;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kEnvError;
    }
    return 0;
}
