#include "irag/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "irag/assets.hpp"
#include "irag/errors.hpp"
#include "irag/http_client.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

std::string comparable(std::string_view text) { return to_lower_ascii(normalize_text(text)); }

// "1. foo", "2) foo", "- foo", "* foo", "• foo" -> "foo"; second is true when
// the line carried numbering or a bullet.
std::pair<std::string, bool> strip_list_marker(std::string_view line) {
    auto text = trim(line);
    std::size_t i = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i > 0 && i < text.size() && (text[i] == '.' || text[i] == ')' || text[i] == ':')) {
        return {trim(std::string_view(text).substr(i + 1)), true};
    }
    if (text.rfind("- ", 0) == 0 || text.rfind("* ", 0) == 0) return {trim(std::string_view(text).substr(2)), true};
    if (text.rfind("\xE2\x80\xA2", 0) == 0) return {trim(std::string_view(text).substr(3)), true};
    return {text, false};
}

std::string unquote(std::string text) {
    if (text.size() >= 2 && ((text.front() == '"' && text.back() == '"') || (text.front() == '\'' && text.back() == '\''))) {
        text = trim(std::string_view(text).substr(1, text.size() - 2));
    }
    return text;
}

std::vector<ScoredChunk> min_max(std::span<const SearchHit> candidates) {
    std::vector<ScoredChunk> out;
    if (candidates.empty()) return out;
    double lo = candidates.front().score, hi = candidates.front().score;
    for (const auto& c : candidates) {
        lo = std::min(lo, c.score);
        hi = std::max(hi, c.score);
    }
    for (const auto& c : candidates) {
        const double rel = hi > lo ? (c.score - lo) / (hi - lo) : 1.0;
        out.push_back({c.chunk, rel});
    }
    return out;
}

std::string rerank_payload(const std::string& query, const Chunk& chunk) {
    return "### QUERY\n" + query + "\n\n### PASSAGE\n" + chunk.text + "\n";
}

std::vector<ScoredChunk> judge_rerank(const std::string& query, std::span<const SearchHit> candidates,
                                      ModelGateway& gateway, const RetrievalConfig& cfg) {
    static const std::vector<double> scale = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto instruction = assets::get("prompts/rerank_judge.v1.txt");
    std::vector<ScoredChunk> out(candidates.size());
    parallel_for(candidates.size(), cfg.workers, [&](std::size_t i) {
        const auto verdict = judge(gateway, instruction, rerank_payload(query, candidates[i].chunk), scale);
        out[i] = {candidates[i].chunk, verdict.score / 10.0};
    });
    return out;
}

std::vector<ScoredChunk> external_rerank(const std::string& query, std::span<const SearchHit> candidates,
                                         const RetrievalConfig& cfg) {
    if (cfg.rerank_url.empty()) throw ConfigError("rerank mode external needs retrieval.rerank_url");
    json documents = json::array();
    for (const auto& c : candidates) documents.push_back(c.chunk.text);
    const json body{{"query", query}, {"documents", documents}, {"top_n", cfg.final_k}};
    HttpRetryPolicy policy;
    policy.timeout_s = cfg.rerank_timeout_s;
    const auto reply = post_json(cfg.rerank_url, "/rerank", body, policy);

    std::vector<ScoredChunk> out;
    std::unordered_set<std::size_t> seen;
    for (const auto& r : reply.at("results")) {
        const auto idx = r.at("index").get<std::size_t>();
        const auto score = r.at("relevance_score").get<double>();
        if (idx >= candidates.size()) throw GatewayError("rerank result index out of range");
        if (!(score >= 0.0 && score <= 1.0)) throw GatewayError("rerank relevance_score outside [0, 1]");
        if (!seen.insert(idx).second) throw GatewayError("rerank result index repeated");
        out.push_back({candidates[idx].chunk, score});
    }
    return out;
}

}  // namespace

std::vector<std::string> QuerySet::formulations() const {
    std::vector<std::string> out{original};
    out.insert(out.end(), rewrites.begin(), rewrites.end());
    return out;
}

RerankMode parse_rerank_mode(std::string_view tag) {
    if (tag == "judge") return RerankMode::judge;
    if (tag == "external") return RerankMode::external;
    if (tag == "none") return RerankMode::none;
    throw ConfigError("unknown rerank mode '" + std::string(tag) + "' (expected judge, external or none)");
}

std::string to_string(RerankMode mode) {
    switch (mode) {
        case RerankMode::judge: return "judge";
        case RerankMode::external: return "external";
        case RerankMode::none: return "none";
    }
    return "none";
}

void RetrievalConfig::validate() const {
    if (k_per_query == 0) throw ConfigError("retrieval.k_per_query must be at least 1");
    if (final_k == 0 || final_k > kMaxContextChunks) {
        throw ConfigError("retrieval.final_k must be within [1, " + std::to_string(kMaxContextChunks) + "]");
    }
}

std::vector<std::string> parse_rewrites(std::string_view reply, std::string_view original, std::size_t n) {
    std::vector<std::pair<std::string, bool>> lines;
    bool any_marked = false;
    for (const auto& raw : split_lines(reply)) {
        auto [text, marked] = strip_list_marker(raw);
        any_marked = any_marked || marked;
        lines.emplace_back(unquote(std::move(text)), marked);
    }
    std::vector<std::string> out;
    std::set<std::string> seen{comparable(original)};
    for (auto& [text, marked] : lines) {
        if (out.size() == n) break;
        if (any_marked && !marked) continue;  // preamble or trailing prose
        if (text.empty()) continue;
        if (!seen.insert(comparable(text)).second) continue;
        out.push_back(std::move(text));
    }
    return out;
}

QuerySet rewrite_query(const std::string& query, std::size_t n, ModelGateway& gateway) {
    if (trim(query).empty()) throw PreconditionError("query is empty");
    QuerySet qs{query, {}, {}};
    if (n == 0) return qs;

    ChatRequest req;
    req.model = gateway.chat_model();
    req.system_prompt = std::string(assets::get("prompts/rewrite_system.v1.txt"));
    req.user_prompt = render_template(assets::get("prompts/rewrite_user.v1.txt"),
                                      {{"count", std::to_string(n)}, {"query", query}});
    req.temperature = 0.7;
    req.max_tokens = 512;
    try {
        qs.rewrites = parse_rewrites(gateway.chat(req).text, query, n);
    } catch (const Error& e) {
        qs.warning = std::string("query rewriting failed, using the original query only: ") + e.what();
        spdlog::warn("{}", qs.warning);
    }
    return qs;
}

std::vector<SearchHit> deduplicate(std::vector<SearchHit> candidates) {
    std::sort(candidates.begin(), candidates.end(), hit_before);
    std::vector<SearchHit> kept;
    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> texts;
    for (auto& hit : candidates) {
        if (!ids.insert(hit.chunk_id).second) continue;
        if (!texts.insert(normalize_text(hit.chunk.text)).second) continue;
        kept.push_back(std::move(hit));
    }
    return kept;
}

RerankResult rerank(const std::string& query, std::span<const SearchHit> candidates, RerankMode mode,
                    ModelGateway& gateway, const RetrievalConfig& cfg) {
    RerankResult result;
    result.used = mode;
    try {
        switch (mode) {
            case RerankMode::judge: result.ranked = judge_rerank(query, candidates, gateway, cfg); break;
            case RerankMode::external: result.ranked = external_rerank(query, candidates, cfg); break;
            case RerankMode::none: result.ranked = min_max(candidates); break;
        }
    } catch (const std::exception& e) {
        const auto note = "rerank mode " + to_string(mode) + " failed, fell back to embedding-score order: " + e.what();
        spdlog::warn("{}", note);
        result.annotations.push_back(note);
        result.used = RerankMode::none;
        result.ranked = min_max(candidates);
    }
    std::sort(result.ranked.begin(), result.ranked.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.relevance != b.relevance) return a.relevance > b.relevance;
        return a.chunk.chunk_id < b.chunk.chunk_id;
    });
    if (result.ranked.size() > cfg.final_k) result.ranked.resize(cfg.final_k);
    return result;
}

RankedContext retrieve(const std::string& query, const VectorIndex& index, ModelGateway& gateway,
                       const RetrievalConfig& cfg) {
    cfg.validate();
    const auto qs = rewrite_query(query, cfg.rewrites, gateway);

    RankedContext ctx;
    ctx.query = query;
    ctx.trace.rerank_requested = cfg.rerank_mode;
    if (!qs.warning.empty()) ctx.trace.annotations.push_back(qs.warning);

    const auto formulations = qs.formulations();
    std::vector<Embedding> vectors;
    try {
        vectors = gateway.embed(formulations);
    } catch (const Error& e) {
        throw RetrievalError(std::string("embedding the query failed: ") + e.what());
    }

    std::vector<SearchHit> merged;
    for (const auto& v : vectors) {
        auto hits = index.search(v, cfg.k_per_query, cfg.similarity);
        ctx.trace.candidates_per_formulation.push_back(hits.size());
        merged.insert(merged.end(), std::make_move_iterator(hits.begin()), std::make_move_iterator(hits.end()));
    }
    ctx.trace.after_merge = merged.size();

    const auto unique = deduplicate(std::move(merged));
    ctx.trace.after_dedup = unique.size();

    auto reranked = rerank(query, unique, cfg.rerank_mode, gateway, cfg);
    ctx.trace.rerank_used = reranked.used;
    ctx.trace.annotations.insert(ctx.trace.annotations.end(), reranked.annotations.begin(),
                                 reranked.annotations.end());
    ctx.chunks = std::move(reranked.ranked);
    ctx.trace.after_rerank = ctx.chunks.size();
    return ctx;
}

json to_json(const RankedContext& ctx) {
    json chunks = json::array();
    for (const auto& sc : ctx.chunks) {
        chunks.push_back({{"chunk_id", sc.chunk.chunk_id}, {"relevance", sc.relevance}});
    }
    return json{{"query", ctx.query},
                {"chunks", chunks},
                {"trace",
                 {{"candidates_per_formulation", ctx.trace.candidates_per_formulation},
                  {"after_merge", ctx.trace.after_merge},
                  {"after_dedup", ctx.trace.after_dedup},
                  {"after_rerank", ctx.trace.after_rerank},
                  {"rerank_requested", to_string(ctx.trace.rerank_requested)},
                  {"rerank_used", to_string(ctx.trace.rerank_used)},
                  {"annotations", ctx.trace.annotations}}}};
}

}  // namespace irag
