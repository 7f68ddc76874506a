#include "irag/eval.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "irag/assets.hpp"
#include "irag/errors.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

constexpr double kBinaryScale[] = {0, 1};
constexpr double kOrdinalScale[] = {0, 5, 10};
constexpr double kOrdinalValues[] = {0, 0.5, 1};

constexpr std::string_view kPromptAssets[] = {
    "prompts/generation_system.v1.txt", "prompts/generation_user.v1.txt", "prompts/repair.v1.txt",
    "prompts/rewrite_system.v1.txt",    "prompts/rewrite_user.v1.txt",    "prompts/judge_format.v1.txt",
    "prompts/rerank_judge.v1.txt",      "prompts/ars_judge.v1.txt",       "prompts/helpfulness_judge.v1.txt",
    "prompts/faithfulness_judge.v1.txt", "prompts/doc_relevance_judge.v1.txt"};

// Uniform in [0, bound) without modulo bias.
std::uint64_t bounded(std::mt19937_64& eng, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = eng();
        if (x >= threshold) return x % bound;
    }
}

MetricScore judged(Metric metric, ModelGateway& gateway, std::string_view instruction_asset, const std::string& payload,
                   std::span<const double> scale, double divisor) {
    MetricScore s;
    s.metric = metric;
    try {
        const auto v = judge(gateway, assets::get(instruction_asset), payload, scale);
        s.value = v.score / divisor;
        s.justification = v.justification;
    } catch (const Error& e) {
        s.valid = false;
        s.justification = e.what();
    }
    return s;
}

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string format_value(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

DatasetTag parse_dataset_tag(std::string_view tag) {
    if (tag == "system_qa") return DatasetTag::system_qa;
    if (tag == "out_of_domain") return DatasetTag::out_of_domain;
    if (tag == "robustness") return DatasetTag::robustness;
    throw ConfigError("unknown dataset_tag '" + std::string(tag) + "'");
}

std::string to_string(DatasetTag tag) {
    switch (tag) {
        case DatasetTag::system_qa: return "system_qa";
        case DatasetTag::out_of_domain: return "out_of_domain";
        case DatasetTag::robustness: return "robustness";
    }
    return "system_qa";
}

std::vector<QAPair> parse_dataset(std::string_view jsonl) {
    std::vector<QAPair> out;
    std::unordered_set<std::string> ids;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(jsonl)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw LoadError("not a JSON object", line_no);
        QAPair p;
        for (const char* field : {"qa_id", "question", "reference_answer", "dataset_tag"}) {
            if (!j.contains(field) || !j[field].is_string()) {
                throw LoadError(std::string("field '") + field + "' missing or not a string", line_no);
            }
        }
        p.qa_id = j["qa_id"].get<std::string>();
        p.question = j["question"].get<std::string>();
        p.reference_answer = j["reference_answer"].get<std::string>();
        try {
            p.dataset_tag = parse_dataset_tag(j["dataset_tag"].get<std::string>());
        } catch (const ConfigError& e) {
            throw LoadError(e.what(), line_no);
        }
        if (trim(p.qa_id).empty()) throw LoadError("qa_id is empty", line_no);
        if (trim(p.question).empty()) throw LoadError("question is empty", line_no);
        if (trim(p.reference_answer).empty()) throw LoadError("reference_answer is empty", line_no);
        if (!ids.insert(p.qa_id).second) throw LoadError("duplicate qa_id '" + p.qa_id + "'", line_no);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<QAPair> load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

std::string write_dataset(std::span<const QAPair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += json{{"qa_id", p.qa_id},
                    {"question", p.question},
                    {"reference_answer", p.reference_answer},
                    {"dataset_tag", to_string(p.dataset_tag)}}
                   .dump();
        out += '\n';
    }
    return out;
}

std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw PreconditionError("a derangement needs at least 2 elements");
    std::mt19937_64 eng(seed);
    std::vector<std::size_t> p(n);
    for (;;) {
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n - 1; i > 0; --i) std::swap(p[i], p[bounded(eng, i + 1)]);
        bool fixed = false;
        for (std::size_t i = 0; i < n && !fixed; ++i) fixed = p[i] == i;
        if (!fixed) return p;
    }
}

std::vector<QAPair> derange(std::span<const QAPair> pairs, std::uint64_t seed) {
    const auto perm = derangement(pairs.size(), seed);
    std::vector<QAPair> out(pairs.begin(), pairs.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].reference_answer = pairs[perm[i]].reference_answer;
        out[i].dataset_tag = DatasetTag::robustness;
    }
    return out;
}

Metric parse_metric(std::string_view tag) {
    for (auto m : kAllMetrics) {
        if (to_string(m) == tag) return m;
    }
    throw ConfigError("unknown metric '" + std::string(tag) + "'");
}

std::string to_string(Metric metric) {
    switch (metric) {
        case Metric::ars_binary: return "ars_binary";
        case Metric::ars_ordinal: return "ars_ordinal";
        case Metric::helpfulness: return "helpfulness";
        case Metric::faithfulness: return "faithfulness";
        case Metric::doc_relevance: return "doc_relevance";
    }
    return "ars_binary";
}

std::span<const double> metric_values(Metric metric) {
    if (metric == Metric::ars_ordinal) return kOrdinalValues;
    return kBinaryScale;
}

std::string ars_payload(const std::string& question, const std::string& answer, const std::string& reference) {
    return "### QUESTION\n" + question + "\n\n### ANSWER\n" + answer + "\n\n### REFERENCE\n" + reference + "\n";
}

std::string helpfulness_payload(const std::string& question, const std::string& answer) {
    return "### QUESTION\n" + question + "\n\n### ANSWER\n" + answer + "\n";
}

std::string faithfulness_payload(const std::string& question, const std::string& answer,
                                 const RankedContext& context) {
    return "### QUESTION\n" + question + "\n\n### ANSWER\n" + answer + "\n\n### CONTEXT\n" + render_context(context);
}

std::string doc_relevance_payload(const std::string& question, const RankedContext& context) {
    return "### QUESTION\n" + question + "\n\n### CONTEXT\n" + render_context(context);
}

MetricScore score_answer_vs_reference(const std::string& question, const std::string& answer,
                                      const std::string& reference, ArsMode mode, ModelGateway& gateway) {
    const auto payload = ars_payload(question, answer, reference);
    if (mode == ArsMode::binary) {
        return judged(Metric::ars_binary, gateway, "prompts/ars_judge.v1.txt", payload, kBinaryScale, 1.0);
    }
    return judged(Metric::ars_ordinal, gateway, "prompts/ars_judge.v1.txt", payload, kOrdinalScale, 10.0);
}

MetricScore score_helpfulness(const std::string& question, const std::string& answer, ModelGateway& gateway) {
    return judged(Metric::helpfulness, gateway, "prompts/helpfulness_judge.v1.txt",
                  helpfulness_payload(question, answer), kBinaryScale, 1.0);
}

MetricScore score_faithfulness(const std::string& question, const ExplanationResult& answer,
                               const RankedContext& context, ModelGateway& gateway) {
    if (!answer.context_found) {
        MetricScore s;
        s.metric = Metric::faithfulness;
        s.value = 1.0;
        s.justification = "abstention makes no unsupported claim";
        return s;
    }
    return judged(Metric::faithfulness, gateway, "prompts/faithfulness_judge.v1.txt",
                  faithfulness_payload(question, answer.explanation, context), kBinaryScale, 1.0);
}

MetricScore score_document_relevance(const std::string& question, const RankedContext& context,
                                     ModelGateway& gateway) {
    if (context.chunks.empty()) {
        MetricScore s;
        s.metric = Metric::doc_relevance;
        s.value = 0.0;
        s.justification = "nothing was retrieved";
        return s;
    }
    return judged(Metric::doc_relevance, gateway, "prompts/doc_relevance_judge.v1.txt",
                  doc_relevance_payload(question, context), kBinaryScale, 1.0);
}

const MetricSummary* EvalReport::summary(Metric metric) const {
    for (const auto& s : summaries) {
        if (s.metric == metric) return &s;
    }
    return nullptr;
}

std::optional<double> mean_of(std::span<const MetricScore> cells, Metric metric) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) {
        if (c.metric != metric || !c.valid) continue;
        sum += c.value;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

json prompt_snapshot() {
    json prompts = json::object();
    for (auto name : kPromptAssets) prompts[std::string(name)] = assets::fingerprint(name);
    return json{{"prompts", prompts}, {"judge_temperature", kJudgeTemperature}};
}

EvalReport run_evaluation(std::span<const QAPair> dataset, const Pipeline& pipeline, ModelGateway& judge_gateway,
                          const EvalConfig& cfg) {
    if (cfg.runs < 1) throw PreconditionError("runs must be at least 1");
    if (cfg.metrics.empty()) throw PreconditionError("no metrics requested");

    EvalReport report;
    report.model = cfg.model.empty() ? judge_gateway.chat_model() : cfg.model;
    report.runs = cfg.runs;
    report.questions = dataset.size();
    if (!dataset.empty()) {
        report.dataset_tag = dataset.front().dataset_tag;
        for (const auto& p : dataset) {
            if (p.dataset_tag != report.dataset_tag) throw PreconditionError("dataset mixes dataset_tag values");
        }
    }

    std::vector<std::string> metric_names;
    for (auto m : cfg.metrics) metric_names.push_back(to_string(m));
    report.config = prompt_snapshot();
    report.config["runs"] = cfg.runs;
    report.config["seed"] = cfg.seed;
    report.config["metrics"] = metric_names;
    report.config["judge_model"] = judge_gateway.judge_model();
    report.config.update(cfg.snapshot);

    const std::size_t runs = static_cast<std::size_t>(cfg.runs);
    const std::size_t cell_count = dataset.size() * runs;
    std::vector<GenerationRecord> generations(cell_count);
    std::vector<std::vector<MetricScore>> scores(cell_count);

    parallel_for(cell_count, cfg.workers, [&](std::size_t cell) {
        const auto& pair = dataset[cell / runs];
        const int run = static_cast<int>(cell % runs);
        auto& gen = generations[cell];
        gen.qa_id = pair.qa_id;
        gen.run_index = run;

        std::optional<PipelineOutput> out;
        try {
            out = pipeline(pair.question);
        } catch (const std::exception& e) {
            gen.ok = false;
            gen.error = e.what();
            spdlog::warn("{} run {}: pipeline failed: {}", pair.qa_id, run, e.what());
        }
        if (out) {
            gen.context_found = out->result.context_found;
            gen.explanation = out->result.explanation;
            for (const auto& e : out->result.evidence) gen.cited.push_back(e.chunk_id);
        }

        for (auto metric : cfg.metrics) {
            MetricScore s;
            if (!out) {
                s.metric = metric;
                s.valid = false;
                s.justification = "pipeline error: " + gen.error;
            } else {
                const auto& answer = out->result.explanation;
                switch (metric) {
                    case Metric::ars_binary:
                    case Metric::ars_ordinal:
                        s = score_answer_vs_reference(pair.question, answer, pair.reference_answer,
                                                      metric == Metric::ars_binary ? ArsMode::binary
                                                                                   : ArsMode::ordinal,
                                                      judge_gateway);
                        break;
                    case Metric::helpfulness: s = score_helpfulness(pair.question, answer, judge_gateway); break;
                    case Metric::faithfulness:
                        s = score_faithfulness(pair.question, out->result, out->context, judge_gateway);
                        break;
                    case Metric::doc_relevance:
                        s = score_document_relevance(pair.question, out->context, judge_gateway);
                        break;
                }
            }
            s.qa_id = pair.qa_id;
            s.run_index = run;
            scores[cell].push_back(std::move(s));
        }
    });

    for (auto& cell : scores) {
        for (auto& s : cell) report.cells.push_back(std::move(s));
    }
    report.generations = std::move(generations);

    for (auto metric : cfg.metrics) {
        MetricSummary sum;
        sum.metric = metric;
        for (const auto& c : report.cells) {
            if (c.metric != metric) continue;
            (c.valid ? sum.valid : sum.invalid)++;
        }
        sum.mean = mean_of(report.cells, metric);
        report.summaries.push_back(sum);
    }

    std::size_t ok = 0, abstained = 0;
    for (const auto& g : report.generations) {
        if (!g.ok) continue;
        ++ok;
        abstained += g.context_found ? 0 : 1;
    }
    if (ok > 0) report.abstention_rate = static_cast<double>(abstained) / static_cast<double>(ok);

    if (dataset.empty()) report.flags.push_back("empty dataset");
    if (!report.cells.empty() && std::none_of(report.cells.begin(), report.cells.end(),
                                              [](const MetricScore& c) { return c.valid; })) {
        report.flags.push_back("no valid cells");
    }
    std::size_t invalid = 0;
    for (const auto& s : report.summaries) invalid += s.invalid;
    if (invalid > 0) report.flags.push_back(fmt::format("{} invalid cells excluded from means", invalid));
    return report;
}

ReportFormat parse_report_format(std::string_view tag) {
    if (tag == "markdown" || tag == "md") return ReportFormat::markdown;
    if (tag == "csv") return ReportFormat::csv;
    if (tag == "json") return ReportFormat::json;
    throw ConfigError("unknown report format '" + std::string(tag) + "' (expected markdown, csv or json)");
}

std::string render_report(std::span<const EvalReport> reports, ReportFormat format) {
    switch (format) {
        case ReportFormat::markdown: {
            std::string out = "| LLM | ARS | Faith. | Help. | Doc. Rel. |\n|---|---:|---:|---:|---:|\n";
            std::string notes;
            for (const auto& r : reports) {
                if (r.cells.empty()) continue;
                auto cell = [&](Metric m) {
                    const auto* s = r.summary(m);
                    return s && s->mean ? format_value(*s->mean) : std::string();
                };
                out += fmt::format("| {} | {} | {} | {} | {} |\n", r.model, cell(Metric::ars_binary),
                                   cell(Metric::faithfulness), cell(Metric::helpfulness),
                                   cell(Metric::doc_relevance));
                for (const auto& f : r.flags) notes += fmt::format("- {} ({}): {}\n", r.model, to_string(r.dataset_tag), f);
            }
            if (!notes.empty()) out += "\n" + notes;
            return out;
        }
        case ReportFormat::csv: {
            std::string out = "model,dataset,qa_id,run,metric,value,valid,justification\n";
            for (const auto& r : reports) {
                for (const auto& c : r.cells) {
                    out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(r.model), to_string(r.dataset_tag),
                                       csv_field(c.qa_id), c.run_index, to_string(c.metric),
                                       c.valid ? fmt::format("{}", c.value) : std::string(),
                                       c.valid ? "true" : "false", csv_field(c.justification));
                }
            }
            return out;
        }
        case ReportFormat::json: {
            json arr = json::array();
            for (const auto& r : reports) arr.push_back(to_json(r));
            return arr.dump(2) + "\n";
        }
    }
    return {};
}

std::string render_report(const EvalReport& report, ReportFormat format) {
    return render_report(std::span<const EvalReport>(&report, 1), format);
}

json to_json(const EvalReport& report) {
    json summaries = json::array();
    for (const auto& s : report.summaries) {
        summaries.push_back({{"metric", to_string(s.metric)},
                             {"mean", s.mean ? json(*s.mean) : json(nullptr)},
                             {"valid", s.valid},
                             {"invalid", s.invalid}});
    }
    json cells = json::array();
    for (const auto& c : report.cells) {
        cells.push_back({{"metric", to_string(c.metric)},
                         {"qa_id", c.qa_id},
                         {"run_index", c.run_index},
                         {"value", c.value},
                         {"justification", c.justification},
                         {"valid", c.valid}});
    }
    json generations = json::array();
    for (const auto& g : report.generations) {
        generations.push_back({{"qa_id", g.qa_id},
                               {"run_index", g.run_index},
                               {"ok", g.ok},
                               {"context_found", g.context_found},
                               {"explanation", g.explanation},
                               {"cited", g.cited},
                               {"error", g.error}});
    }
    return json{{"model", report.model},
                {"dataset_tag", to_string(report.dataset_tag)},
                {"runs", report.runs},
                {"questions", report.questions},
                {"summaries", summaries},
                {"abstention_rate", report.abstention_rate ? json(*report.abstention_rate) : json(nullptr)},
                {"flags", report.flags},
                {"config", report.config},
                {"cells", cells},
                {"generations", generations}};
}

EvalReport eval_report_from_json(const json& j) {
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    r.dataset_tag = parse_dataset_tag(j.at("dataset_tag").get<std::string>());
    r.runs = j.at("runs").get<int>();
    r.questions = j.at("questions").get<std::size_t>();
    for (const auto& s : j.at("summaries")) {
        MetricSummary m;
        m.metric = parse_metric(s.at("metric").get<std::string>());
        if (!s.at("mean").is_null()) m.mean = s.at("mean").get<double>();
        m.valid = s.at("valid").get<std::size_t>();
        m.invalid = s.at("invalid").get<std::size_t>();
        r.summaries.push_back(m);
    }
    if (!j.at("abstention_rate").is_null()) r.abstention_rate = j.at("abstention_rate").get<double>();
    r.flags = j.at("flags").get<std::vector<std::string>>();
    r.config = j.at("config");
    for (const auto& c : j.at("cells")) {
        r.cells.push_back({parse_metric(c.at("metric").get<std::string>()), c.at("qa_id").get<std::string>(),
                           c.at("run_index").get<int>(), c.at("value").get<double>(),
                           c.at("justification").get<std::string>(), c.at("valid").get<bool>()});
    }
    for (const auto& g : j.at("generations")) {
        r.generations.push_back({g.at("qa_id").get<std::string>(), g.at("run_index").get<int>(),
                                 g.at("ok").get<bool>(), g.at("context_found").get<bool>(),
                                 g.at("explanation").get<std::string>(),
                                 g.at("cited").get<std::vector<std::string>>(), g.at("error").get<std::string>()});
    }
    return r;
}

}  // namespace irag
