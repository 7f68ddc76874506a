#include "irag/gateway.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "irag/assets.hpp"
#include "irag/errors.hpp"
#include "irag/http_client.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<256>& sem) : sem_(sem) { sem_.acquire(); }
    ~SlotGuard() { sem_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<256>& sem_;
};

std::ptrdiff_t clamp_slots(std::size_t n) {
    return static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(n, 1, 256));
}

std::string format_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
        return std::to_string(static_cast<long long>(v));
    }
    return fmt::format("{}", v);
}

std::optional<double> as_score(const json& value) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) {
        const auto text = trim(value.get<std::string>());
        double d = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
        if (!text.empty() && ec == std::errc{} && ptr == text.data() + text.size()) return d;
    }
    return std::nullopt;
}

}  // namespace

ModelGateway::ModelGateway(GatewaySettings settings)
    : settings_(std::move(settings)), slots_(clamp_slots(settings_.max_concurrency)) {}

ChatResponse ModelGateway::chat(const ChatRequest& request) {
    if (!std::isfinite(request.temperature) || request.temperature < 0.0 || request.temperature > 2.0) {
        throw PreconditionError("chat temperature must be finite and within [0, 2]");
    }
    if (trim(request.user_prompt).empty()) throw PreconditionError("chat user prompt is empty");
    if (request.max_tokens <= 0) throw PreconditionError("chat max_tokens must be positive");
    SlotGuard guard(slots_);
    return do_chat(request);
}

std::vector<Embedding> ModelGateway::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw PreconditionError("embed needs at least one text");
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) throw PreconditionError("embed text " + std::to_string(i) + " is empty");
    }
    std::vector<Embedding> out;
    {
        SlotGuard guard(slots_);
        out = do_embed(texts);
    }
    if (out.size() != texts.size()) {
        throw IntegrityError("embedder returned " + std::to_string(out.size()) + " vectors for " +
                             std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : out) {
        if (v.empty() || v.size() != out.front().size()) {
            throw IntegrityError("embedder returned vectors of inconsistent dimension");
        }
    }
    return out;
}

std::string ModelGateway::chat_model() const {
    return settings_.chat_model.empty() ? std::string("default") : settings_.chat_model;
}

std::string ModelGateway::judge_model() const {
    return settings_.judge_model.empty() ? chat_model() : settings_.judge_model;
}

std::string format_scale(std::span<const double> scale) {
    std::string out;
    for (std::size_t i = 0; i < scale.size(); ++i) {
        if (i) out += ", ";
        out += format_number(scale[i]);
    }
    return out;
}

std::optional<json> extract_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

JudgeVerdict judge(ModelGateway& gateway, std::string_view instruction, std::string_view payload,
                   std::span<const double> scale, int max_attempts) {
    if (scale.empty()) throw PreconditionError("judge scale is empty");
    const auto scale_text = format_scale(scale);

    ChatRequest req;
    req.model = gateway.judge_model();
    req.system_prompt =
        std::string(instruction) + render_template(assets::get("prompts/judge_format.v1.txt"), {{"scale", scale_text}});
    req.temperature = kJudgeTemperature;
    req.max_tokens = 512;
    req.response_format = ResponseFormat::json_object;

    std::string last_raw;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        req.user_prompt = std::string(payload);
        if (attempt > 1) {
            req.user_prompt += render_template(assets::get("prompts/repair.v1.txt"),
                                               {{"problem", "it was not a JSON object with a score from: " + scale_text},
                                                {"previous", last_raw}});
        }
        last_raw = gateway.chat(req).text;

        const auto obj = extract_json_object(last_raw);
        if (!obj || !obj->contains("score")) continue;
        const auto score = as_score((*obj)["score"]);
        if (!score) continue;
        const auto in_scale = std::any_of(scale.begin(), scale.end(),
                                          [&](double s) { return std::fabs(s - *score) < 1e-9; });
        if (!in_scale) continue;

        JudgeVerdict verdict;
        verdict.score = *score;
        if (auto j = obj->find("justification"); j != obj->end() && j->is_string()) {
            verdict.justification = j->get<std::string>();
        }
        verdict.raw = last_raw;
        verdict.attempts = attempt;
        return verdict;
    }
    throw VerdictInvalidError("judge reply not usable after " + std::to_string(max_attempts) + " attempts",
                              last_raw);
}

std::unique_ptr<ModelGateway> make_gateway(const GatewaySettings& settings) {
    const std::string_view url = settings.url;
    if (url.rfind("mock:", 0) == 0) {
        // mock:<seed>[:<dimension>]
        const auto mock_args = url.substr(5);
        const auto colon = mock_args.find(':');
        std::uint64_t seed = 0;
        std::size_t dimension = 64;
        const auto seed_text = mock_args.substr(0, colon);
        auto [p1, e1] = std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), seed);
        if (seed_text.empty() || e1 != std::errc{} || p1 != seed_text.data() + seed_text.size()) {
            throw ConfigError("mock gateway url must be mock:<seed>[:<dimension>], got " + settings.url);
        }
        if (colon != std::string_view::npos) {
            const auto dim_text = mock_args.substr(colon + 1);
            auto [p2, e2] = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), dimension);
            if (e2 != std::errc{} || p2 != dim_text.data() + dim_text.size() || dimension == 0) {
                throw ConfigError("invalid mock dimension in " + settings.url);
            }
        }
        auto playbook = settings.playbook_path.empty() ? Playbook{} : Playbook::load(settings.playbook_path);
        return std::make_unique<MockGateway>(seed, dimension, std::move(playbook), settings);
    }
    if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0) {
        return make_http_gateway(settings);
    }
    throw ConfigError("unsupported gateway url '" + settings.url + "' (expected http(s):// or mock:<seed>)");
}

}  // namespace irag
