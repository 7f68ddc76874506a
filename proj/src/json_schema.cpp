#include "irag/json_schema.hpp"

#include <regex>

#include "irag/assets.hpp"
#include "irag/util.hpp"

namespace irag {

namespace {

using nlohmann::json;

bool matches_type(const json& value, const std::string& type) {
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "boolean") return value.is_boolean();
    if (type == "null") return value.is_null();
    if (type == "number") return value.is_number();
    if (type == "integer") {
        if (value.is_number_integer()) return true;
        if (value.is_number_float()) {
            const double d = value.get<double>();
            return d == static_cast<double>(static_cast<long long>(d));
        }
        return false;
    }
    return false;
}

void validate(const json& schema, const json& value, const std::string& path,
              std::vector<std::string>& errors) {
    if (schema.is_boolean()) {
        if (!schema.get<bool>()) errors.push_back(path + ": disallowed by schema");
        return;
    }
    if (!schema.is_object()) return;

    if (auto it = schema.find("type"); it != schema.end()) {
        bool ok = false;
        if (it->is_string()) {
            ok = matches_type(value, it->get<std::string>());
        } else if (it->is_array()) {
            for (const auto& t : *it) ok = ok || matches_type(value, t.get<std::string>());
        }
        if (!ok) {
            errors.push_back(path + ": expected type " + it->dump());
            return;
        }
    }
    if (auto it = schema.find("const"); it != schema.end() && *it != value) {
        errors.push_back(path + ": expected const " + it->dump());
    }
    if (auto it = schema.find("enum"); it != schema.end()) {
        bool found = false;
        for (const auto& v : *it) found = found || v == value;
        if (!found) errors.push_back(path + ": not in enum " + it->dump());
    }

    if (value.is_string()) {
        const auto& s = value.get_ref<const std::string&>();
        const auto len = utf8_length(s);
        if (auto it = schema.find("minLength"); it != schema.end() && len < it->get<std::size_t>()) {
            errors.push_back(path + ": shorter than minLength " + it->dump());
        }
        if (auto it = schema.find("maxLength"); it != schema.end() && len > it->get<std::size_t>()) {
            errors.push_back(path + ": longer than maxLength " + it->dump());
        }
        if (auto it = schema.find("pattern"); it != schema.end()) {
            const std::regex re(it->get<std::string>(), std::regex::ECMAScript);
            if (!std::regex_search(s, re)) errors.push_back(path + ": does not match pattern " + it->dump());
        }
    }
    if (value.is_number()) {
        const double d = value.get<double>();
        if (auto it = schema.find("minimum"); it != schema.end() && d < it->get<double>()) {
            errors.push_back(path + ": below minimum " + it->dump());
        }
        if (auto it = schema.find("maximum"); it != schema.end() && d > it->get<double>()) {
            errors.push_back(path + ": above maximum " + it->dump());
        }
    }
    if (value.is_array()) {
        if (auto it = schema.find("minItems"); it != schema.end() && value.size() < it->get<std::size_t>()) {
            errors.push_back(path + ": fewer than minItems " + it->dump());
        }
        if (auto it = schema.find("maxItems"); it != schema.end() && value.size() > it->get<std::size_t>()) {
            errors.push_back(path + ": more than maxItems " + it->dump());
        }
        if (auto it = schema.find("items"); it != schema.end()) {
            for (std::size_t i = 0; i < value.size(); ++i) {
                validate(*it, value[i], path + "/" + std::to_string(i), errors);
            }
        }
    }
    if (value.is_object()) {
        if (auto it = schema.find("required"); it != schema.end()) {
            for (const auto& key : *it) {
                if (!value.contains(key.get<std::string>())) {
                    errors.push_back(path + ": missing required property " + key.dump());
                }
            }
        }
        const auto props = schema.find("properties");
        const auto additional = schema.find("additionalProperties");
        for (const auto& [key, member] : value.items()) {
            if (props != schema.end() && props->contains(key)) {
                validate((*props)[key], member, path + "/" + key, errors);
            } else if (additional != schema.end()) {
                validate(*additional, member, path + "/" + key, errors);
            }
        }
    }

    if (auto cond = schema.find("if"); cond != schema.end()) {
        std::vector<std::string> probe;
        validate(*cond, value, path, probe);
        const char* branch = probe.empty() ? "then" : "else";
        if (auto it = schema.find(branch); it != schema.end()) validate(*it, value, path, errors);
    }
}

}  // namespace

std::vector<std::string> validate_json_schema(const json& schema, const json& instance) {
    std::vector<std::string> errors;
    validate(schema, instance, "", errors);
    return errors;
}

std::vector<std::string> validate_explanation_json(const json& instance) {
    static const json schema = json::parse(assets::get("schema/explanation-result.schema.json"));
    return validate_json_schema(schema, instance);
}

}  // namespace irag
