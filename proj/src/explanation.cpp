#include "irag/explanation.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "irag/assets.hpp"
#include "irag/errors.hpp"

namespace irag {

using nlohmann::json;

namespace {

struct ModelReply {
    std::string explanation;
    bool context_found = true;
    std::vector<std::string> cited;
};

// Returns the problem with `text`, or an empty string when `out` was filled.
std::string parse_model_reply(std::string_view text, ModelReply& out) {
    const auto obj = extract_json_object(text);
    if (!obj) return "no JSON object found";
    const auto& j = *obj;
    if (!j.contains("explanation") || !j["explanation"].is_string()) return "\"explanation\" must be a string";
    if (!j.contains("context_found") || !j["context_found"].is_boolean()) {
        return "\"context_found\" must be true or false";
    }
    out.explanation = trim(j["explanation"].get<std::string>());
    out.context_found = j["context_found"].get<bool>();
    if (out.context_found && out.explanation.empty()) return "\"explanation\" is empty";
    out.cited.clear();
    if (j.contains("evidence")) {
        if (!j["evidence"].is_array()) return "\"evidence\" must be an array";
        for (const auto& e : j["evidence"]) {
            if (e.is_string()) {
                out.cited.push_back(e.get<std::string>());
            } else if (e.is_object() && e.contains("chunk_id") && e["chunk_id"].is_string()) {
                out.cited.push_back(e["chunk_id"].get<std::string>());
            } else {
                return "every evidence entry needs a string \"chunk_id\"";
            }
        }
    }
    return {};
}

ExplanationResult abstention(const std::string& query, const std::string& model, Timestamp now) {
    ExplanationResult r;
    r.query = query;
    r.explanation = std::string(kAbstentionText);
    r.context_found = false;
    r.model = model;
    r.generated_at = now;
    return r;
}

}  // namespace

Timestamp system_now() { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); }

std::string render_context(const RankedContext& context) {
    if (context.chunks.empty()) return std::string(kNoContextMarker) + "\n";
    std::string out;
    for (const auto& sc : context.chunks) {
        out += fmt::format("[chunk_id: {} | issue: {} | relevance: {:.3f}]\n{}\n\n", sc.chunk.chunk_id,
                           sc.chunk.metadata.issue_id, sc.relevance, sc.chunk.text);
    }
    return out;
}

Prompt build_prompt(const std::string& query, const RankedContext& context) {
    return {std::string(assets::get("prompts/generation_system.v1.txt")),
            render_template(assets::get("prompts/generation_user.v1.txt"),
                            {{"query", query}, {"context", render_context(context)}})};
}

bool should_abstain(const RankedContext& context, double threshold) {
    return context.chunks.empty() || context.top_relevance() < threshold;
}

ExplanationResult explain_from_context(const std::string& query, const RankedContext& context,
                                       ModelGateway& gateway, const GenerationConfig& cfg) {
    const auto now = cfg.clock ? cfg.clock() : system_now();
    const auto model = gateway.chat_model();
    if (should_abstain(context, cfg.abstain_threshold)) return abstention(query, model, now);

    const auto prompt = build_prompt(query, context);
    ChatRequest req;
    req.model = model;
    req.system_prompt = prompt.system;
    req.user_prompt = prompt.user;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.response_format = ResponseFormat::json_object;

    ModelReply reply;
    std::string raw;
    std::string problem;
    std::string answered_by = model;
    for (int attempt = 0; attempt <= cfg.max_repairs; ++attempt) {
        if (attempt > 0) {
            req.user_prompt = prompt.user + render_template(assets::get("prompts/repair.v1.txt"),
                                                            {{"problem", problem}, {"previous", raw}});
        }
        const auto resp = gateway.chat(req);
        raw = resp.text;
        if (!resp.model.empty()) answered_by = resp.model;
        problem = parse_model_reply(raw, reply);
        if (problem.empty()) break;
        spdlog::debug("explanation attempt {} unusable: {}", attempt + 1, problem);
    }
    if (!problem.empty()) {
        throw GenerationError(fmt::format("model output unusable after {} repairs: {}", cfg.max_repairs, problem),
                              raw);
    }
    if (!reply.context_found) return abstention(query, answered_by, now);

    std::unordered_map<std::string, const ScoredChunk*> by_id;
    for (const auto& sc : context.chunks) by_id.emplace(sc.chunk.chunk_id, &sc);

    ExplanationResult r;
    r.query = query;
    r.explanation = reply.explanation;
    r.context_found = true;
    r.model = answered_by;
    r.generated_at = now;
    std::unordered_set<std::string> cited;
    for (const auto& id : reply.cited) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            r.warnings.push_back("dropped evidence citing unknown chunk_id '" + id + "'");
            spdlog::warn("{}", r.warnings.back());
            continue;
        }
        if (!cited.insert(id).second) continue;
        const auto& chunk = it->second->chunk;
        r.evidence.push_back({chunk.chunk_id, chunk.metadata.issue_id, chunk.metadata.source_url,
                              utf8_truncate(chunk.text, kMaxExcerptChars),
                              std::clamp(it->second->relevance, 0.0, 1.0)});
    }
    return r;
}

PipelineOutput run_pipeline(const std::string& query, const VectorIndex& index, ModelGateway& gateway,
                            const GenerationConfig& cfg) {
    PipelineOutput out;
    out.context = retrieve(query, index, gateway, cfg.retrieval);
    out.result = explain_from_context(query, out.context, gateway, cfg);
    for (const auto& note : out.context.trace.annotations) out.result.warnings.push_back(note);
    return out;
}

ExplanationResult generate_explanation(const std::string& query, const VectorIndex& index, ModelGateway& gateway,
                                       const GenerationConfig& cfg) {
    return run_pipeline(query, index, gateway, cfg).result;
}

json to_json(const ExplanationResult& result) {
    json evidence = json::array();
    for (const auto& e : result.evidence) {
        evidence.push_back({{"chunk_id", e.chunk_id},
                            {"issue_id", e.issue_id},
                            {"source_url", e.source_url},
                            {"excerpt", e.excerpt},
                            {"relevance", e.relevance}});
    }
    return json{{"query", result.query},
                {"explanation", result.explanation},
                {"evidence", evidence},
                {"context_found", result.context_found},
                {"model", result.model},
                {"generated_at", format_utc_timestamp(result.generated_at)},
                {"warnings", result.warnings}};
}

ExplanationResult explanation_from_json(const json& j) {
    ExplanationResult r;
    r.query = j.at("query").get<std::string>();
    r.explanation = j.at("explanation").get<std::string>();
    r.context_found = j.at("context_found").get<bool>();
    r.model = j.at("model").get<std::string>();
    const auto ts = parse_utc_timestamp(j.at("generated_at").get<std::string>());
    if (!ts) throw ConfigError("generated_at is not a UTC timestamp");
    r.generated_at = *ts;
    r.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& e : j.at("evidence")) {
        r.evidence.push_back({e.at("chunk_id").get<std::string>(), e.at("issue_id").get<std::int64_t>(),
                              e.at("source_url").get<std::string>(), e.at("excerpt").get<std::string>(),
                              e.at("relevance").get<double>()});
    }
    return r;
}

}  // namespace irag
