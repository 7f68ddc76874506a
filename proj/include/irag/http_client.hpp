#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "irag/gateway.hpp"

namespace irag {

struct HttpRetryPolicy {
    int max_retries = 3;
    int backoff_base_ms = 500;
    double timeout_s = 120.0;
};

/// POSTs `body` as JSON to base_url + path and parses the JSON reply.
/// Transport failures, 429 and 5xx are retried `max_retries` times with
/// exponential backoff (base, 2*base, 4*base, ...). Other non-2xx statuses
/// fail at once. Throws GatewayError (status and truncated body attached)
/// or TimeoutError.
nlohmann::json post_json(const std::string& base_url, const std::string& path, const nlohmann::json& body,
                         const HttpRetryPolicy& policy);

/// True when the server answers GET / with any HTTP status.
bool http_ping(const std::string& base_url, double timeout_s);

/// JSON-over-HTTP gateway speaking the wire contract in docs/gateway-wire.md.
std::unique_ptr<ModelGateway> make_http_gateway(const GatewaySettings& settings);

}  // namespace irag
