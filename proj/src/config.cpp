#include "irag/config.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>

#include "irag/errors.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

class TomlLine {
public:
    TomlLine(std::string_view text, std::size_t line_no) : s_(text), line_(line_no) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("irag.toml line " + std::to_string(line_) + ": " + what);
    }

    void skip_ws() {
        while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
    }

    bool at_end_or_comment() {
        skip_ws();
        return i_ >= s_.size() || s_[i_] == '#';
    }

    char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }

    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++i_;
    }

    std::string key() {
        skip_ws();
        const auto start = i_;
        while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' || s_[i_] == '-')) {
            ++i_;
        }
        if (i_ == start) fail("expected a bare key");
        return std::string(s_.substr(start, i_ - start));
    }

    json value() {
        skip_ws();
        const char c = peek();
        if (c == '"') return string_value();
        if (c == '[') {
            ++i_;
            json arr = json::array();
            skip_ws();
            if (peek() == ']') {
                ++i_;
                return arr;
            }
            for (;;) {
                arr.push_back(value());
                skip_ws();
                if (peek() == ',') {
                    ++i_;
                    skip_ws();
                    if (peek() == ']') {
                        ++i_;
                        return arr;
                    }
                    continue;
                }
                if (peek() == ']') {
                    ++i_;
                    return arr;
                }
                fail("expected ',' or ']' in array");
            }
        }
        const auto start = i_;
        while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '#' && s_[i_] != ' ' && s_[i_] != '\t') {
            ++i_;
        }
        const std::string token(s_.substr(start, i_ - start));
        if (token == "true") return true;
        if (token == "false") return false;
        std::string digits;
        for (char d : token) {
            if (d != '_') digits += d;
        }
        if (digits.empty()) fail("missing value");
        try {
            std::size_t used = 0;
            if (digits.find_first_of(".eE") == std::string::npos) {
                const long long v = std::stoll(digits, &used);
                if (used == digits.size()) return v;
            } else {
                const double v = std::stod(digits, &used);
                if (used == digits.size()) return v;
            }
        } catch (const std::exception&) {
        }
        fail("unsupported value '" + token + "'");
    }

private:
    json string_value() {
        ++i_;
        std::string out;
        while (i_ < s_.size() && s_[i_] != '"') {
            char c = s_[i_++];
            if (c == '\\') {
                if (i_ >= s_.size()) break;
                const char e = s_[i_++];
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out += c;
        }
        if (i_ >= s_.size()) fail("unterminated string");
        ++i_;
        return out;
    }

    std::string_view s_;
    std::size_t line_;
    std::size_t i_ = 0;
};

[[noreturn]] void bad_key(const std::string& section, const std::string& key, const std::string& what) {
    throw ConfigError("irag.toml [" + section + "] " + key + ": " + what);
}

std::string as_string(const std::string& sec, const std::string& key, const json& v) {
    if (!v.is_string()) bad_key(sec, key, "expected a string");
    return v.get<std::string>();
}

double as_number(const std::string& sec, const std::string& key, const json& v) {
    if (!v.is_number()) bad_key(sec, key, "expected a number");
    return v.get<double>();
}

std::size_t as_count(const std::string& sec, const std::string& key, const json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0) bad_key(sec, key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

double parse_seconds(const std::string& name, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size() && v > 0) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(name + " must be a positive number of seconds, got '" + text + "'");
}

}  // namespace

json parse_toml(std::string_view text) {
    json doc = json::object();
    std::string section;
    std::size_t line_no = 0;
    for (const auto& raw : split_lines(text)) {
        ++line_no;
        TomlLine line(raw, line_no);
        if (line.at_end_or_comment()) continue;
        if (line.peek() == '[') {
            line.expect('[');
            section = line.key();
            line.expect(']');
            if (!line.at_end_or_comment()) line.fail("trailing characters after section header");
            if (doc.contains(section)) line.fail("section [" + section + "] repeated");
            doc[section] = json::object();
            continue;
        }
        const auto key = line.key();
        line.expect('=');
        auto value = line.value();
        if (!line.at_end_or_comment()) line.fail("trailing characters after value");
        if (section.empty()) line.fail("key '" + key + "' outside a section");
        if (doc[section].contains(key)) line.fail("key '" + key + "' repeated");
        doc[section][key] = std::move(value);
    }
    return doc;
}

void apply_file_config(AppConfig& cfg, const json& doc) {
    for (const auto& [sec, table] : doc.items()) {
        if (sec != "gateway" && sec != "retrieval" && sec != "generation" && sec != "index" && sec != "service") {
            throw ConfigError("irag.toml: unknown section [" + sec + "]");
        }
        for (const auto& [key, v] : table.items()) {
            if (sec == "gateway") {
                auto& g = cfg.gateway;
                if (key == "url") g.url = as_string(sec, key, v);
                else if (key == "chat_model") g.chat_model = as_string(sec, key, v);
                else if (key == "embed_model") g.embed_model = as_string(sec, key, v);
                else if (key == "judge_model") g.judge_model = as_string(sec, key, v);
                else if (key == "timeout_s") g.timeout_s = as_number(sec, key, v);
                else if (key == "max_concurrency") g.max_concurrency = as_count(sec, key, v);
                else if (key == "max_retries") g.max_retries = static_cast<int>(as_count(sec, key, v));
                else if (key == "backoff_base_ms") g.backoff_base_ms = static_cast<int>(as_count(sec, key, v));
                else if (key == "playbook") g.playbook_path = as_string(sec, key, v);
                else bad_key(sec, key, "unknown key");
            } else if (sec == "retrieval") {
                auto& r = cfg.generation.retrieval;
                if (key == "rewrites") r.rewrites = as_count(sec, key, v);
                else if (key == "k_per_query") r.k_per_query = as_count(sec, key, v);
                else if (key == "final_k") r.final_k = as_count(sec, key, v);
                else if (key == "rerank") r.rerank_mode = parse_rerank_mode(as_string(sec, key, v));
                else if (key == "rerank_url") r.rerank_url = as_string(sec, key, v);
                else if (key == "similarity") r.similarity = parse_similarity(as_string(sec, key, v));
                else if (key == "workers") r.workers = as_count(sec, key, v);
                else bad_key(sec, key, "unknown key");
            } else if (sec == "generation") {
                auto& g = cfg.generation;
                if (key == "abstain_threshold") g.abstain_threshold = as_number(sec, key, v);
                else if (key == "temperature") g.temperature = as_number(sec, key, v);
                else if (key == "max_tokens") g.max_tokens = static_cast<int>(as_count(sec, key, v));
                else if (key == "max_repairs") g.max_repairs = static_cast<int>(as_count(sec, key, v));
                else bad_key(sec, key, "unknown key");
            } else if (sec == "index") {
                if (key == "path") cfg.index_path = as_string(sec, key, v);
                else if (key == "chunk_size") cfg.chunking.chunk_size = as_count(sec, key, v);
                else if (key == "overlap") cfg.chunking.overlap = as_count(sec, key, v);
                else if (key == "batch_size") cfg.build.batch_size = as_count(sec, key, v);
                else bad_key(sec, key, "unknown key");
            } else {
                auto& s = cfg.service;
                if (key == "listen") {
                    s.listen = as_string(sec, key, v);
                } else if (key == "cors_origins") {
                    if (!v.is_array()) bad_key(sec, key, "expected an array of strings");
                    s.cors_origins.clear();
                    for (const auto& o : v) s.cors_origins.push_back(as_string(sec, key, o));
                } else if (key == "max_query_chars") {
                    s.max_query_chars = as_count(sec, key, v);
                } else {
                    bad_key(sec, key, "unknown key");
                }
            }
        }
    }
}

void apply_env_config(AppConfig& cfg, const EnvLookup& env) {
    if (auto v = env("GATEWAY_URL")) cfg.gateway.url = *v;
    if (auto v = env("GATEWAY_CHAT_MODEL")) cfg.gateway.chat_model = *v;
    if (auto v = env("GATEWAY_EMBED_MODEL")) cfg.gateway.embed_model = *v;
    if (auto v = env("GATEWAY_JUDGE_MODEL")) cfg.gateway.judge_model = *v;
    if (auto v = env("GATEWAY_TIMEOUT_S")) cfg.gateway.timeout_s = parse_seconds("GATEWAY_TIMEOUT_S", *v);
    if (auto v = env("GATEWAY_PLAYBOOK")) cfg.gateway.playbook_path = *v;
}

std::optional<std::string> process_env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

AppConfig load_config(const std::string& path, bool required, const EnvLookup& env) {
    AppConfig cfg;
    if (!path.empty()) {
        if (std::filesystem::exists(path)) {
            apply_file_config(cfg, parse_toml(read_file(path)));
        } else if (required) {
            throw ConfigError("config file " + path + " does not exist");
        }
    }
    apply_env_config(cfg, env);
    return cfg;
}

}  // namespace irag
