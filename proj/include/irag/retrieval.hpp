#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "irag/gateway.hpp"
#include "irag/vector_index.hpp"

namespace irag {

/// Upper bound on the evidence handed to generation.
inline constexpr std::size_t kMaxContextChunks = 15;

struct QuerySet {
    std::string original;
    std::vector<std::string> rewrites;  // unique, never equal to `original`
    /// Set when rewriting failed and the set fell back to the original only.
    std::string warning;

    /// The original followed by the rewrites.
    std::vector<std::string> formulations() const;
};

enum class RerankMode { judge, external, none };

RerankMode parse_rerank_mode(std::string_view tag);
std::string to_string(RerankMode mode);

struct RetrievalConfig {
    std::size_t rewrites = 3;
    std::size_t k_per_query = 10;
    std::size_t final_k = kMaxContextChunks;
    RerankMode rerank_mode = RerankMode::judge;
    /// Base URL of the external rerank service (mode external).
    std::string rerank_url;
    double rerank_timeout_s = 60.0;
    Similarity similarity = Similarity::dot;
    /// Concurrent judge calls while reranking; the gateway cap still applies.
    std::size_t workers = 4;

    /// Throws ConfigError for k_per_query == 0 or final_k outside [1, 15].
    void validate() const;
};

struct ScoredChunk {
    Chunk chunk;
    double relevance = 0.0;  // in [0, 1]
};

struct RetrievalTrace {
    std::vector<std::size_t> candidates_per_formulation;
    std::size_t after_merge = 0;
    std::size_t after_dedup = 0;
    std::size_t after_rerank = 0;
    RerankMode rerank_requested = RerankMode::judge;
    RerankMode rerank_used = RerankMode::judge;
    /// Every degraded step leaves a line here.
    std::vector<std::string> annotations;

    bool degraded() const { return !annotations.empty(); }
};

struct RankedContext {
    std::string query;
    std::vector<ScoredChunk> chunks;  // relevance desc, chunk_id asc
    RetrievalTrace trace;

    double top_relevance() const { return chunks.empty() ? 0.0 : chunks.front().relevance; }
};

/// Asks the chat model for `n` alternative formulations and parses the
/// numbered reply leniently. Never throws on gateway failure: the result then
/// carries only the original and a warning.
QuerySet rewrite_query(const std::string& query, std::size_t n, ModelGateway& gateway);

/// Parses a model's list of formulations: numbering and bullets stripped,
/// empties, duplicates and copies of `original` dropped, at most `n` kept.
std::vector<std::string> parse_rewrites(std::string_view reply, std::string_view original, std::size_t n);

/// Drops repeated chunk ids (highest score kept) and chunks whose normalized
/// text equals an already kept chunk. Output ordered by hit_before().
std::vector<SearchHit> deduplicate(std::vector<SearchHit> candidates);

struct RerankResult {
    std::vector<ScoredChunk> ranked;
    RerankMode used = RerankMode::none;
    std::vector<std::string> annotations;
};

/// Assigns relevance in [0, 1] and keeps the best cfg.final_k.
///   judge:    one judge call per candidate on the scale 0..10, divided by 10.
///   external: POST {rerank_url}/rerank, see docs/gateway-wire.md.
///   none:     min-max normalized retrieval scores (all 1.0 when equal).
/// judge and external fall back to none on failure and say so in annotations.
RerankResult rerank(const std::string& query, std::span<const SearchHit> candidates, RerankMode mode,
                    ModelGateway& gateway, const RetrievalConfig& cfg);

/// Rewrite, embed every formulation, search k_per_query each, merge,
/// deduplicate, rerank, truncate. Throws RetrievalError when embedding fails.
RankedContext retrieve(const std::string& query, const VectorIndex& index, ModelGateway& gateway,
                       const RetrievalConfig& cfg);

nlohmann::json to_json(const RankedContext& ctx);

}  // namespace irag
