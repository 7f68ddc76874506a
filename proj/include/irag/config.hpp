#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "irag/chunking.hpp"
#include "irag/explanation.hpp"
#include "irag/gateway.hpp"
#include "irag/vector_index.hpp"

namespace irag {

struct ServiceSettings {
    std::string listen = "127.0.0.1:8080";
    std::vector<std::string> cors_origins;
    std::size_t max_query_chars = 2000;
};

/// Everything configurable from irag.toml, the environment and flags.
struct AppConfig {
    GatewaySettings gateway;
    GenerationConfig generation;  // includes the retrieval settings
    ChunkingOptions chunking;
    IndexBuildOptions build;
    ServiceSettings service;
    std::string index_path;
};

/// Parses the TOML subset used by irag.toml: `[section]` headers and
/// `key = value` lines with basic strings, integers, floats, booleans and
/// single-line arrays of those; `#` comments. Returns {section: {key: value}}.
/// Throws ConfigError naming the line on anything else.
nlohmann::json parse_toml(std::string_view text);

/// Applies a parsed file; unknown sections or keys are errors.
void apply_file_config(AppConfig& cfg, const nlohmann::json& doc);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads GATEWAY_URL, GATEWAY_CHAT_MODEL, GATEWAY_EMBED_MODEL,
/// GATEWAY_JUDGE_MODEL, GATEWAY_TIMEOUT_S and GATEWAY_PLAYBOOK.
void apply_env_config(AppConfig& cfg, const EnvLookup& env);

std::optional<std::string> process_env(const std::string& name);

/// Defaults, then `path` (skipped when empty or, if `required` is false,
/// missing), then the environment. Flags are applied by the caller last.
AppConfig load_config(const std::string& path, bool required, const EnvLookup& env = process_env);

}  // namespace irag
