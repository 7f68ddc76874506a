#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "irag/config.hpp"
#include "irag/explanation.hpp"
#include "irag/gateway.hpp"
#include "irag/vector_index.hpp"

namespace irag {

struct HttpReply {
    int status = 200;
    std::string body;
};

/// FNV-1a over the serialized index, as 16 hex digits.
std::string index_checksum(const VectorIndex& index);

/// Request handlers of the HTTP service, free of any socket code. The index
/// is never modified; a null index makes explain and chunk lookups answer 503.
///
/// Error bodies are {"error": <code>, "message": <text>} with codes
///   400 bad_request, query_empty, query_too_long
///   404 not_found
///   502 gateway_error, generation_failed
///   503 index_not_loaded
///   500 internal_error, response_invalid
class ExplainService {
public:
    ExplainService(std::shared_ptr<const VectorIndex> index, ModelGateway& gateway, GenerationConfig generation,
                   ServiceSettings settings);

    HttpReply handle_explain(std::string_view body) const;
    HttpReply handle_chunk_lookup(std::string_view chunk_id) const;
    HttpReply handle_health() const;

    /// The value for Access-Control-Allow-Origin, when `origin` is allowed.
    std::optional<std::string> allowed_origin(std::string_view origin) const;

    const ServiceSettings& settings() const { return settings_; }

private:
    std::shared_ptr<const VectorIndex> index_;
    ModelGateway& gateway_;
    GenerationConfig generation_;
    ServiceSettings settings_;
    std::string checksum_;
};

/// Blocking HTTP front end for an ExplainService.
class HttpServer {
public:
    explicit HttpServer(const ExplainService& service);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds `host:port`; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(). In-flight requests finish before it returns.
    void run();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; throws ConfigError on a malformed address.
std::pair<std::string, int> parse_listen_address(std::string_view listen);

}  // namespace irag
