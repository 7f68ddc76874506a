#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "irag/explanation.hpp"
#include "irag/gateway.hpp"
#include "irag/retrieval.hpp"

namespace irag {

enum class DatasetTag { system_qa, out_of_domain, robustness };

DatasetTag parse_dataset_tag(std::string_view tag);
std::string to_string(DatasetTag tag);

struct QAPair {
    std::string qa_id;
    std::string question;
    std::string reference_answer;
    DatasetTag dataset_tag = DatasetTag::system_qa;

    bool operator==(const QAPair&) const = default;
};

/// JSON lines with qa_id, question, reference_answer, dataset_tag. Blank
/// lines are ignored. Throws LoadError naming the 1-based line of the first
/// violation, including a repeated qa_id.
std::vector<QAPair> parse_dataset(std::string_view jsonl);
std::vector<QAPair> load_dataset(const std::string& path);
std::string write_dataset(std::span<const QAPair> pairs);

/// Fixed-point-free permutation of [0, n): seeded Fisher-Yates shuffles of
/// the identity, rejected until one has no fixed point. Portable: uses
/// mt19937_64 with its own bounded sampling. Throws PreconditionError for n < 2.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed);

/// Pair i receives the reference answer of pair derangement(n, seed)[i].
/// Questions and qa_ids stay; the tag becomes robustness.
std::vector<QAPair> derange(std::span<const QAPair> pairs, std::uint64_t seed);

enum class Metric { ars_binary, ars_ordinal, helpfulness, faithfulness, doc_relevance };

inline constexpr Metric kAllMetrics[] = {Metric::ars_binary, Metric::ars_ordinal, Metric::helpfulness,
                                         Metric::faithfulness, Metric::doc_relevance};

Metric parse_metric(std::string_view tag);
std::string to_string(Metric metric);

/// The values a metric may take: {0, 0.5, 1} for ars_ordinal, {0, 1} otherwise.
std::span<const double> metric_values(Metric metric);

struct MetricScore {
    Metric metric = Metric::ars_binary;
    std::string qa_id;
    int run_index = 0;
    double value = 0.0;
    std::string justification;
    bool valid = true;

    bool operator==(const MetricScore&) const = default;
};

enum class ArsMode { binary, ordinal };

/// Judge-scored agreement with the reference; ordinal scores 0/5/10 map to 0/0.5/1.
MetricScore score_answer_vs_reference(const std::string& question, const std::string& answer,
                                      const std::string& reference, ArsMode mode, ModelGateway& gateway);
MetricScore score_helpfulness(const std::string& question, const std::string& answer, ModelGateway& gateway);
/// An abstaining answer scores 1 without a judge call.
MetricScore score_faithfulness(const std::string& question, const ExplanationResult& answer,
                               const RankedContext& context, ModelGateway& gateway);
/// Judged over the whole retrieved set; an empty context scores 0 without a judge call.
MetricScore score_document_relevance(const std::string& question, const RankedContext& context,
                                     ModelGateway& gateway);

/// Judge inputs, exposed for golden tests.
std::string ars_payload(const std::string& question, const std::string& answer, const std::string& reference);
std::string helpfulness_payload(const std::string& question, const std::string& answer);
std::string faithfulness_payload(const std::string& question, const std::string& answer,
                                 const RankedContext& context);
std::string doc_relevance_payload(const std::string& question, const RankedContext& context);

/// What the harness records about one generation.
struct GenerationRecord {
    std::string qa_id;
    int run_index = 0;
    bool ok = true;
    bool context_found = false;
    std::string explanation;
    std::vector<std::string> cited;
    std::string error;

    bool operator==(const GenerationRecord&) const = default;
};

struct MetricSummary {
    Metric metric = Metric::ars_binary;
    std::optional<double> mean;  // absent when no cell is valid
    std::size_t valid = 0;
    std::size_t invalid = 0;

    bool operator==(const MetricSummary&) const = default;
};

struct EvalReport {
    std::string model;
    DatasetTag dataset_tag = DatasetTag::system_qa;
    int runs = 0;
    std::size_t questions = 0;
    std::vector<MetricSummary> summaries;  // in requested metric order
    std::vector<MetricScore> cells;        // qa order, then run, then metric
    std::vector<GenerationRecord> generations;
    /// Share of successful generations with context_found = false.
    std::optional<double> abstention_rate;
    std::vector<std::string> flags;
    nlohmann::json config = nlohmann::json::object();

    const MetricSummary* summary(Metric metric) const;
    bool operator==(const EvalReport&) const = default;
};

/// Mean of the valid cells of `metric`, or nullopt.
std::optional<double> mean_of(std::span<const MetricScore> cells, Metric metric);

/// Produces the retrieval context and explanation for a question.
using Pipeline = std::function<PipelineOutput(const std::string& question)>;

struct EvalConfig {
    /// Report row label; defaults to the judge gateway's chat model.
    std::string model;
    int runs = 3;
    std::uint64_t seed = 17;
    std::vector<Metric> metrics{std::begin(kAllMetrics), std::end(kAllMetrics)};
    /// Concurrent (qa, run) cells; the gateway cap still applies.
    std::size_t workers = 4;
    /// Merged into the report's config snapshot.
    nlohmann::json snapshot = nlohmann::json::object();
};

/// Every (qa, run) cell generates once and scores each requested metric.
/// A failing pipeline or judge marks the affected cells invalid and the run
/// goes on. Throws PreconditionError when runs < 1.
EvalReport run_evaluation(std::span<const QAPair> dataset, const Pipeline& pipeline, ModelGateway& judge_gateway,
                          const EvalConfig& cfg);

/// Prompt fingerprints and judge settings recorded in every report.
nlohmann::json prompt_snapshot();

enum class ReportFormat { markdown, csv, json };

ReportFormat parse_report_format(std::string_view tag);

/// markdown: one row per report under | LLM | ARS | Faith. | Help. | Doc. Rel. |
/// (ARS is the binary variant; a missing mean is a blank cell). csv: one row
/// per cell. json: an array of full reports.
std::string render_report(std::span<const EvalReport> reports, ReportFormat format);
std::string render_report(const EvalReport& report, ReportFormat format);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace irag
