#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace irag {

using Embedding = std::vector<float>;

enum class ResponseFormat { free_text, json_object };

struct ChatRequest {
    std::string model;
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.2;
    int max_tokens = 1024;
    ResponseFormat response_format = ResponseFormat::free_text;
};

struct ChatResponse {
    std::string text;
    std::string model;
    std::int64_t latency_ms = 0;
};

struct JudgeVerdict {
    double score = 0.0;
    std::string justification;
    std::string raw;  // verbatim model output of the accepted attempt
    int attempts = 0;
};

/// Judge calls run at this temperature to damp scoring variability.
inline constexpr double kJudgeTemperature = 0.3;

struct GatewaySettings {
    /// `http(s)://host:port` of a model server, or `mock:<seed>[:<dimension>]`.
    std::string url = "http://127.0.0.1:11434";
    std::string chat_model;
    std::string embed_model;
    std::string judge_model;
    double timeout_s = 120.0;
    std::size_t max_concurrency = 4;
    int max_retries = 3;
    int backoff_base_ms = 500;
    /// Mock only: JSON file with the scripted rules.
    std::string playbook_path;
};

/// The single boundary to language-model capabilities. Public calls check
/// their preconditions and hold one of `max_concurrency` slots while the
/// backend runs; implementations override the do_* hooks.
class ModelGateway {
public:
    explicit ModelGateway(GatewaySettings settings);
    virtual ~ModelGateway() = default;

    ModelGateway(const ModelGateway&) = delete;
    ModelGateway& operator=(const ModelGateway&) = delete;

    ChatResponse chat(const ChatRequest& request);

    /// One vector per input, in input order, all of the same dimension.
    std::vector<Embedding> embed(std::span<const std::string> texts);

    virtual std::string embedder_id() const = 0;
    virtual bool reachable() = 0;

    const GatewaySettings& settings() const { return settings_; }
    std::string chat_model() const;
    std::string judge_model() const;

protected:
    virtual ChatResponse do_chat(const ChatRequest& request) = 0;
    virtual std::vector<Embedding> do_embed(std::span<const std::string> texts) = 0;

private:
    GatewaySettings settings_;
    std::counting_semaphore<256> slots_;
};

/// Builds an HTTP or mock gateway from `settings.url`.
std::unique_ptr<ModelGateway> make_gateway(const GatewaySettings& settings);

/// Scores `payload` with a judge model. The instruction becomes the system
/// prompt together with the allowed scale and the JSON reply format. Replies
/// that are not `{"score": s, "justification": j}` with s in `scale` are
/// re-prompted with a repair note, up to `max_attempts` calls in total.
/// Throws VerdictInvalidError when every attempt fails.
JudgeVerdict judge(ModelGateway& gateway, std::string_view instruction, std::string_view payload,
                   std::span<const double> scale, int max_attempts = 3);

/// "0, 5, 10" style rendering used in judge prompts.
std::string format_scale(std::span<const double> scale);

/// First balanced JSON object found in `text` (tolerates code fences and
/// surrounding prose), or nullopt.
std::optional<nlohmann::json> extract_json_object(std::string_view text);

// ---------------------------------------------------------------------------
// Mock

/// One scripted rule. It fires when every `match` substring occurs in the
/// request's system prompt + "\n" + user prompt. Either `response` is
/// returned verbatim or the named `behavior` computes the reply.
struct PlaybookRule {
    std::vector<std::string> match;
    std::optional<std::string> response;
    std::string behavior;
    nlohmann::json params = nlohmann::json::object();
};

struct Playbook {
    std::vector<PlaybookRule> rules;

    static Playbook from_json(const nlohmann::json& j);
    static Playbook load(const std::string& path);
};

/// Deterministic offline gateway: every output is a pure function of
/// (seed, request). Embeddings are hashed bags of content words, normalized
/// to unit length; chat replies come from the first matching playbook rule,
/// or a seeded pseudo-random token when none matches.
///
/// Behaviors:
///   overlap_judge    {source, target}: judge verdict from the share of
///                    content words of section `source` found in `target`,
///                    snapped to the prompt's allowed scores.
///   grounded_answer  {cite, sentences, fabricate}: explanation JSON built
///                    from the first `cite` excerpts in the prompt; with
///                    `fabricate` it also cites a chunk_id not in the prompt.
///   rewrite          numbered list of mechanical paraphrases.
class MockGateway final : public ModelGateway {
public:
    MockGateway(std::uint64_t seed, std::size_t dimension, Playbook playbook, GatewaySettings settings);

    std::string embedder_id() const override;
    bool reachable() override { return true; }

    std::uint64_t seed() const { return seed_; }
    std::size_t dimension() const { return dimension_; }

protected:
    ChatResponse do_chat(const ChatRequest& request) override;
    std::vector<Embedding> do_embed(std::span<const std::string> texts) override;

private:
    Embedding embed_one(std::string_view text) const;

    std::uint64_t seed_;
    std::size_t dimension_;
    Playbook playbook_;
};

/// Lowercased alphanumeric words of at least three characters, minus a small
/// English stopword list. Shared by the mock's embedder and judge.
std::vector<std::string> content_terms(std::string_view text);

/// Text under a `### NAME` header line, up to the next `### ` header.
std::optional<std::string> prompt_section(std::string_view prompt, std::string_view name);

}  // namespace irag
