#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "irag/gateway.hpp"
#include "irag/retrieval.hpp"
#include "irag/util.hpp"
#include "irag/vector_index.hpp"

namespace irag {

inline constexpr std::size_t kMaxExcerptChars = 300;
inline constexpr std::string_view kNoContextMarker = "NO CONTEXT AVAILABLE";
inline constexpr std::string_view kAbstentionText =
    "No relevant information was found in the issue tracker to answer this question.";

struct EvidenceItem {
    std::string chunk_id;
    std::int64_t issue_id = 0;
    std::string source_url;
    std::string excerpt;  // at most kMaxExcerptChars code points
    double relevance = 0.0;

    bool operator==(const EvidenceItem&) const = default;
};

struct ExplanationResult {
    std::string query;
    std::string explanation;
    std::vector<EvidenceItem> evidence;
    bool context_found = false;
    std::string model;
    Timestamp generated_at{};
    std::vector<std::string> warnings;

    bool operator==(const ExplanationResult&) const = default;
};

using Clock = std::function<Timestamp()>;

/// Current UTC time truncated to seconds.
Timestamp system_now();

struct GenerationConfig {
    RetrievalConfig retrieval;
    /// Abstain when the best rerank relevance is below this value.
    double abstain_threshold = 0.2;
    double temperature = 0.2;
    int max_tokens = 1024;
    /// Re-prompts after an unusable reply.
    int max_repairs = 2;
    /// Defaults to system_now() when empty.
    Clock clock;
};

struct Prompt {
    std::string system;
    std::string user;
};

/// One block per chunk in context order:
///   [chunk_id: issue-12#0 | issue: 12 | relevance: 0.900]
///   <chunk text>
/// or the NO CONTEXT AVAILABLE marker when the context is empty.
std::string render_context(const RankedContext& context);

Prompt build_prompt(const std::string& query, const RankedContext& context);

bool should_abstain(const RankedContext& context, double threshold);

/// The generation step on an existing retrieval result.
ExplanationResult explain_from_context(const std::string& query, const RankedContext& context,
                                       ModelGateway& gateway, const GenerationConfig& cfg);

struct PipelineOutput {
    RankedContext context;
    ExplanationResult result;
};

/// retrieve() followed by explain_from_context().
PipelineOutput run_pipeline(const std::string& query, const VectorIndex& index, ModelGateway& gateway,
                            const GenerationConfig& cfg);

ExplanationResult generate_explanation(const std::string& query, const VectorIndex& index, ModelGateway& gateway,
                                       const GenerationConfig& cfg);

nlohmann::json to_json(const ExplanationResult& result);
ExplanationResult explanation_from_json(const nlohmann::json& j);

}  // namespace irag
