#include <chrono>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "irag/errors.hpp"
#include "irag/http_client.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxErrorBody = 512;

std::string truncate_body(const std::string& body) {
    return body.size() <= kMaxErrorBody ? body : body.substr(0, kMaxErrorBody) + "...";
}

httplib::Client make_client(const std::string& base_url, double timeout_s) {
    httplib::Client cli(base_url);
    if (!cli.is_valid()) throw ConfigError("cannot use gateway url '" + base_url + "'");
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(timeout_s));
    const auto connect = std::min(timeout, std::chrono::microseconds(10'000'000));
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(connect).count(),
                               static_cast<long>(connect.count() % 1'000'000));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                         static_cast<long>(timeout.count() % 1'000'000));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                          static_cast<long>(timeout.count() % 1'000'000));
    return cli;
}

class HttpGateway final : public ModelGateway {
public:
    explicit HttpGateway(GatewaySettings settings) : ModelGateway(std::move(settings)) {
        policy_.max_retries = this->settings().max_retries;
        policy_.backoff_base_ms = this->settings().backoff_base_ms;
        policy_.timeout_s = this->settings().timeout_s;
    }

    std::string embedder_id() const override {
        return settings().embed_model + "@" + settings().url;
    }

    bool reachable() override { return http_ping(settings().url, std::min(settings().timeout_s, 5.0)); }

protected:
    ChatResponse do_chat(const ChatRequest& request) override {
        json messages = json::array();
        if (!request.system_prompt.empty()) {
            messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
        }
        messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
        json body{{"model", request.model},
                  {"messages", messages},
                  {"options", {{"temperature", request.temperature}, {"num_predict", request.max_tokens}}},
                  {"stream", false}};
        if (request.response_format == ResponseFormat::json_object) body["format"] = "json";

        const auto started = std::chrono::steady_clock::now();
        const auto reply = post_json(settings().url, "/api/chat", body, policy_);
        ChatResponse resp;
        try {
            resp.text = reply.at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw GatewayError("chat reply lacks message.content", 200, truncate_body(reply.dump()));
        }
        resp.model = reply.value("model", request.model);
        resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - started)
                              .count();
        return resp;
    }

    std::vector<Embedding> do_embed(std::span<const std::string> texts) override {
        if (settings().embed_model.empty()) throw ConfigError("GATEWAY_EMBED_MODEL is not set");
        json body{{"model", settings().embed_model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
        const auto reply = post_json(settings().url, "/api/embeddings", body, policy_);
        try {
            return reply.at("embeddings").get<std::vector<Embedding>>();
        } catch (const json::exception&) {
            throw GatewayError("embedding reply lacks an embeddings array", 200, truncate_body(reply.dump()));
        }
    }

private:
    HttpRetryPolicy policy_;
};

}  // namespace

json post_json(const std::string& base_url, const std::string& path, const json& body,
               const HttpRetryPolicy& policy) {
    auto cli = make_client(base_url, policy.timeout_s);
    const auto payload = body.dump();
    std::string last_error;
    int last_status = 0;
    std::string last_body;

    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::chrono::milliseconds(static_cast<long long>(policy.backoff_base_ms) << (attempt - 1));
            spdlog::warn("POST {}{} failed ({}); retry {}/{} in {} ms", base_url, path, last_error, attempt,
                         policy.max_retries, delay.count());
            std::this_thread::sleep_for(delay);
        }
        const auto started = std::chrono::steady_clock::now();
        auto res = cli.Post(path, payload, "application/json");
        if (!res) {
            const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            if (res.error() == httplib::Error::Read && elapsed >= policy.timeout_s * 0.95) {
                throw TimeoutError("POST " + path + " timed out after " + std::to_string(policy.timeout_s) + " s");
            }
            last_error = httplib::to_string(res.error());
            last_status = 0;
            last_body.clear();
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            auto parsed = json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) {
                throw GatewayError("POST " + path + " returned a non-JSON body", res->status, truncate_body(res->body));
            }
            return parsed;
        }
        last_status = res->status;
        last_body = truncate_body(res->body);
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status != 429 && res->status < 500) break;
    }
    throw GatewayError("POST " + base_url + path + " failed: " + last_error, last_status, last_body);
}

bool http_ping(const std::string& base_url, double timeout_s) {
    try {
        auto cli = make_client(base_url, timeout_s);
        auto res = cli.Get("/");
        return static_cast<bool>(res);
    } catch (const ConfigError&) {
        return false;
    }
}

std::unique_ptr<ModelGateway> make_http_gateway(const GatewaySettings& settings) {
    return std::make_unique<HttpGateway>(settings);
}

}  // namespace irag
