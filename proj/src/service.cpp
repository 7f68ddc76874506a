#include "irag/service.hpp"

#include <regex>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "irag/errors.hpp"
#include "irag/json_schema.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

HttpReply error_reply(int status, std::string_view code, std::string_view message) {
    return {status, json{{"error", code}, {"message", message}}.dump()};
}

bool well_formed_chunk_id(std::string_view id) {
    static const std::regex pattern("^issue-[0-9]+#[0-9]+$");
    return std::regex_match(id.begin(), id.end(), pattern);
}

}  // namespace

std::string index_checksum(const VectorIndex& index) { return hex64(fnv1a64(serialize_index(index))); }

ExplainService::ExplainService(std::shared_ptr<const VectorIndex> index, ModelGateway& gateway,
                               GenerationConfig generation, ServiceSettings settings)
    : index_(std::move(index)), gateway_(gateway), generation_(std::move(generation)), settings_(std::move(settings)) {
    generation_.retrieval.validate();
    if (index_) checksum_ = index_checksum(*index_);
}

HttpReply ExplainService::handle_explain(std::string_view body) const {
    const auto req = json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_reply(400, "bad_request", "body is not a JSON object");
    if (!req.contains("query") || !req["query"].is_string()) {
        return error_reply(400, "bad_request", "field \"query\" must be a string");
    }
    const auto query = req["query"].get<std::string>();
    if (find_invalid_utf8(query)) return error_reply(400, "bad_request", "query is not valid UTF-8");
    if (trim(query).empty()) return error_reply(400, "query_empty", "query is empty");
    if (utf8_length(query) > settings_.max_query_chars) {
        return error_reply(400, "query_too_long",
                           "query exceeds " + std::to_string(settings_.max_query_chars) + " characters");
    }
    if (!index_) return error_reply(503, "index_not_loaded", "no index is loaded");

    json out;
    try {
        out = to_json(generate_explanation(query, *index_, gateway_, generation_));
    } catch (const GenerationError& e) {
        spdlog::error("explain: {}", e.what());
        return error_reply(502, "generation_failed", e.what());
    } catch (const GatewayError& e) {
        spdlog::error("explain: {}", e.what());
        return error_reply(502, "gateway_error", e.what());
    } catch (const RetrievalError& e) {
        spdlog::error("explain: {}", e.what());
        return error_reply(502, "gateway_error", e.what());
    } catch (const std::exception& e) {
        spdlog::error("explain: {}", e.what());
        return error_reply(500, "internal_error", e.what());
    }
    if (const auto problems = validate_explanation_json(out); !problems.empty()) {
        spdlog::error("explain: result fails its schema: {}", problems.front());
        return error_reply(500, "response_invalid", problems.front());
    }
    return {200, out.dump()};
}

HttpReply ExplainService::handle_chunk_lookup(std::string_view chunk_id) const {
    if (!well_formed_chunk_id(chunk_id)) {
        return error_reply(400, "bad_request", "chunk id must look like issue-<n>#<k>");
    }
    if (!index_) return error_reply(503, "index_not_loaded", "no index is loaded");
    const auto* chunk = index_->find(chunk_id);
    if (chunk == nullptr) return error_reply(404, "not_found", "no chunk " + std::string(chunk_id));
    return {200, chunk_to_json(*chunk).dump()};
}

HttpReply ExplainService::handle_health() const {
    const bool reachable = gateway_.reachable();
    json out{{"status", index_ && reachable ? "ok" : "degraded"},
             {"index_loaded", static_cast<bool>(index_)},
             {"index_checksum", index_ ? json(checksum_) : json(nullptr)},
             {"corpus_size", index_ ? index_->size() : 0},
             {"embedder_id", index_ ? json(index_->embedder_id()) : json(nullptr)},
             {"gateway_reachable", reachable}};
    return {200, out.dump()};
}

std::optional<std::string> ExplainService::allowed_origin(std::string_view origin) const {
    for (const auto& allowed : settings_.cors_origins) {
        if (allowed == "*") return std::string("*");
        if (!origin.empty() && allowed == origin) return std::string(origin);
    }
    return std::nullopt;
}

std::pair<std::string, int> parse_listen_address(std::string_view listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        throw ConfigError("listen address must be host:port, got '" + std::string(listen) + "'");
    }
    const std::string port_text(listen.substr(colon + 1));
    int port = -1;
    try {
        std::size_t used = 0;
        port = std::stoi(port_text, &used);
        if (used != port_text.size()) port = -1;
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw ConfigError("bad port in listen address '" + std::string(listen) + "'");
    return {std::string(listen.substr(0, colon)), port};
}

struct HttpServer::Impl {
    const ExplainService& service;
    httplib::Server server;

    explicit Impl(const ExplainService& s) : service(s) {
        server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (req.has_header("Origin")) {
                if (auto allowed = service.allowed_origin(req.get_header_value("Origin"))) {
                    res.set_header("Access-Control-Allow-Origin", *allowed);
                    res.set_header("Vary", "Origin");
                }
            }
            if (req.method == "OPTIONS") {
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
                res.status = 204;
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });
        auto send = [](httplib::Response& res, const HttpReply& reply) {
            res.status = reply.status;
            res.set_content(reply.body, "application/json; charset=utf-8");
        };
        server.Post("/api/explain", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, service.handle_explain(req.body));
        });
        server.Get(R"(/api/chunks/(.+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, service.handle_chunk_lookup(httplib::detail::decode_url(req.matches[1], false)));
        });
        server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, service.handle_health());
        });
        server.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                send(res, error_reply(res.status, res.status == 404 ? "not_found" : "bad_request",
                                      "no such endpoint"));
            }
        });
    }
};

HttpServer::HttpServer(const ExplainService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : impl_->server.bind_to_port(host, port)
                                                                            ? port
                                                                            : -1;
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace irag
