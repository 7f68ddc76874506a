#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "irag/errors.hpp"
#include "irag/gateway.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

const std::unordered_set<std::string_view>& stopwords() {
    static const std::unordered_set<std::string_view> words = {
        "the", "and", "for", "are", "was", "were", "what", "which", "who", "whom", "whose", "when",
        "where", "why", "how", "does", "did", "can", "could", "should", "would", "will", "with", "from",
        "that", "this", "these", "those", "there", "their", "they", "them", "then", "than", "into",
        "onto", "about", "have", "has", "had", "been", "being", "not", "but", "you", "your", "our",
        "its", "any", "all", "some", "such", "also", "only", "other", "more", "most", "very", "just",
        "get", "got", "use", "used", "using", "may", "might", "must", "shall", "one", "each", "per",
        "via", "out", "off", "over", "under", "after", "before", "while", "again", "once", "both",
        "his", "her", "him", "she", "himself", "herself", "itself", "yes", "now", "too", "here",
        "happens", "happen", "explain", "tell", "know", "way", "ways", "many", "much",
        // document section markers
        "title", "body", "comment", "url"};
    return words;
}

bool is_word_byte(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || u >= 0x80;
}

std::vector<std::string> all_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word_byte(text[i])) ++i;
        const auto start = i;
        while (i < text.size() && is_word_byte(text[i])) ++i;
        if (i > start) words.push_back(to_lower_ascii(text.substr(start, i - start)));
    }
    return words;
}

double unit_uniform(std::uint64_t& state) {
    // [-1, 1) from the top 53 bits
    return static_cast<double>(splitmix64(state) >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

std::vector<double> parse_allowed_scores(std::string_view system_prompt) {
    std::vector<double> scores;
    constexpr std::string_view kTag = "Allowed scores:";
    const auto pos = system_prompt.find(kTag);
    if (pos == std::string_view::npos) return scores;
    auto end = system_prompt.find('\n', pos);
    if (end == std::string_view::npos) end = system_prompt.size();
    std::string list(system_prompt.substr(pos + kTag.size(), end - pos - kTag.size()));
    std::replace(list.begin(), list.end(), ',', ' ');
    std::size_t i = 0;
    while (i < list.size()) {
        while (i < list.size() && list[i] == ' ') ++i;
        if (i >= list.size()) break;
        std::size_t used = 0;
        scores.push_back(std::stod(list.substr(i), &used));
        i += used;
    }
    return scores;
}

std::string overlap_judge(const ChatRequest& req, const json& params) {
    const auto source_name = params.value("source", "QUESTION");
    const auto target_name = params.value("target", "CONTEXT");
    const auto source = prompt_section(req.user_prompt, source_name).value_or("");
    const auto target = prompt_section(req.user_prompt, target_name).value_or("");
    const auto src_terms = content_terms(source);
    const auto tgt_terms = content_terms(target);
    const std::set<std::string> src(src_terms.begin(), src_terms.end());
    const std::set<std::string> tgt(tgt_terms.begin(), tgt_terms.end());
    std::size_t shared = 0;
    for (const auto& t : src) shared += tgt.count(t);
    const double ratio = src.empty() ? 0.0 : static_cast<double>(shared) / static_cast<double>(src.size());

    auto scale = parse_allowed_scores(req.system_prompt);
    if (scale.empty()) scale = {0.0, 1.0};
    std::sort(scale.begin(), scale.end());
    const double target_score = ratio * scale.back();
    // nearest allowed score, ties toward the higher one
    double best = scale.front();
    for (double s : scale) {
        if (std::fabs(s - target_score) <= std::fabs(best - target_score)) best = s;
    }
    json reply{{"score", best},
               {"justification", fmt::format("{} of {} key terms of the {} appear in the {}.", shared, src.size(),
                                             to_lower_ascii(source_name), to_lower_ascii(target_name))}};
    if (best == std::floor(best)) reply["score"] = static_cast<long long>(best);
    return reply.dump();
}

struct Excerpt {
    std::string chunk_id;
    std::string text;
};

std::vector<Excerpt> parse_excerpts(std::string_view section) {
    std::vector<Excerpt> out;
    for (const auto& line : split_lines(section)) {
        if (line.rfind("[chunk_id: ", 0) == 0) {
            const auto end = line.find_first_of(" |]", 11);
            out.push_back({line.substr(11, end - 11), {}});
        } else if (!out.empty()) {
            if (!out.back().text.empty()) out.back().text += '\n';
            out.back().text += line;
        }
    }
    return out;
}

std::string strip_markers(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '[') {
            const auto close = text.find(']', i);
            const auto inner = close == std::string_view::npos ? std::string_view{} : text.substr(i + 1, close - i - 1);
            if (inner == "TITLE" || inner == "BODY" || inner.rfind("COMMENT ", 0) == 0) {
                i = close + 1;
                while (i < text.size() && (text[i] == ' ' || text[i] == '\n')) ++i;
                if (!out.empty() && out.back() != ' ') out.push_back(' ');
                continue;
            }
        }
        out.push_back(text[i] == '\n' ? ' ' : text[i]);
        ++i;
    }
    return trim(out);
}

std::string first_sentences(std::string_view text, std::size_t count) {
    std::size_t pos = 0;
    for (std::size_t n = 0; n < count; ++n) {
        const auto stop = text.find_first_of(".!?", pos);
        if (stop == std::string_view::npos) return std::string(text);
        pos = stop + 1;
    }
    return trim(text.substr(0, pos));
}

std::string grounded_answer(const ChatRequest& req, const json& params) {
    const auto query = trim(prompt_section(req.user_prompt, "QUESTION").value_or(""));
    const auto section = prompt_section(req.user_prompt, "ISSUE EXCERPTS").value_or("");
    json reply{{"query", query}};
    const auto excerpts = parse_excerpts(section);
    if (excerpts.empty() || section.find("NO CONTEXT AVAILABLE") != std::string::npos) {
        reply["explanation"] = "No relevant information was found in the issue tracker for this question.";
        reply["context_found"] = false;
        reply["evidence"] = json::array();
        return reply.dump();
    }
    const auto cite = std::min<std::size_t>(params.value("cite", 2), excerpts.size());
    const auto sentences = params.value("sentences", 3);
    std::string explanation = "According to the issue tracker: " +
                              first_sentences(strip_markers(excerpts.front().text), sentences);
    json evidence = json::array();
    for (std::size_t i = 0; i < cite; ++i) evidence.push_back({{"chunk_id", excerpts[i].chunk_id}});
    if (params.value("fabricate", false)) {
        evidence.push_back({{"chunk_id", params.value("fabricated_id", "issue-999999#0")}});
    }
    reply["explanation"] = explanation;
    reply["context_found"] = true;
    reply["evidence"] = evidence;
    return reply.dump();
}

std::string rewrite(const ChatRequest& req) {
    auto query = trim(prompt_section(req.user_prompt, "QUESTION").value_or(""));
    std::size_t count = 3;
    constexpr std::string_view kTag = "Number of rewrites:";
    if (const auto pos = req.user_prompt.find(kTag); pos != std::string::npos) {
        count = std::stoul(req.user_prompt.substr(pos + kTag.size()));
    }
    std::string core = query;
    while (!core.empty() && (core.back() == '?' || core.back() == '.')) core.pop_back();
    std::string keywords;
    for (const auto& t : content_terms(query)) keywords += (keywords.empty() ? "" : " ") + t;

    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
        std::string variant;
        switch (i) {
            case 0: variant = "Explain " + to_lower_ascii(core); break;
            case 1: variant = keywords.empty() ? core : keywords; break;
            case 2: variant = "How does the system handle this: " + core + "?"; break;
            default: variant = core + " (formulation " + std::to_string(i + 1) + ")";
        }
        out += std::to_string(i + 1) + ". " + variant + "\n";
    }
    return out;
}

}  // namespace

std::vector<std::string> content_terms(std::string_view text) {
    std::vector<std::string> out;
    for (auto& w : all_words(text)) {
        if (w.size() >= 3 && !stopwords().count(w)) out.push_back(std::move(w));
    }
    return out;
}

std::optional<std::string> prompt_section(std::string_view prompt, std::string_view name) {
    const auto lines = split_lines(prompt);
    const std::string header = "### " + std::string(name);
    std::optional<std::string> body;
    for (const auto& line : lines) {
        if (line.rfind("### ", 0) == 0) {
            if (body) break;
            if (line.rfind(header, 0) == 0) body = std::string();
            continue;
        }
        if (body) {
            if (!body->empty()) *body += '\n';
            *body += line;
        }
    }
    if (body) *body = trim(*body);
    return body;
}

Playbook Playbook::from_json(const json& j) {
    const json& rules = j.is_array() ? j : j.at("rules");
    Playbook pb;
    for (const auto& r : rules) {
        PlaybookRule rule;
        const auto& m = r.at("match");
        if (m.is_string()) {
            rule.match.push_back(m.get<std::string>());
        } else {
            rule.match = m.get<std::vector<std::string>>();
        }
        if (r.contains("response")) rule.response = r.at("response").get<std::string>();
        rule.behavior = r.value("behavior", "");
        rule.params = r.value("params", json::object());
        if (!rule.response && rule.behavior.empty()) throw ConfigError("playbook rule needs response or behavior");
        if (!rule.behavior.empty() && rule.behavior != "overlap_judge" && rule.behavior != "grounded_answer" &&
            rule.behavior != "rewrite") {
            throw ConfigError("unknown playbook behavior '" + rule.behavior + "'");
        }
        pb.rules.push_back(std::move(rule));
    }
    return pb;
}

Playbook Playbook::load(const std::string& path) {
    const auto parsed = json::parse(read_file(path), nullptr, false);
    if (parsed.is_discarded()) throw ConfigError("playbook " + path + " is not valid JSON");
    try {
        return from_json(parsed);
    } catch (const json::exception& e) {
        throw ConfigError("playbook " + path + ": " + e.what());
    }
}

MockGateway::MockGateway(std::uint64_t seed, std::size_t dimension, Playbook playbook, GatewaySettings settings)
    : ModelGateway(std::move(settings)), seed_(seed), dimension_(dimension), playbook_(std::move(playbook)) {
    if (dimension_ == 0) throw ConfigError("mock dimension must be positive");
}

std::string MockGateway::embedder_id() const { return fmt::format("mock:{}:{}", seed_, dimension_); }

ChatResponse MockGateway::do_chat(const ChatRequest& request) {
    const std::string haystack = request.system_prompt + "\n" + request.user_prompt;
    ChatResponse resp;
    resp.model = request.model;
    for (const auto& rule : playbook_.rules) {
        const bool hit = std::all_of(rule.match.begin(), rule.match.end(),
                                     [&](const std::string& m) { return haystack.find(m) != std::string::npos; });
        if (!hit) continue;
        if (rule.response) {
            resp.text = *rule.response;
        } else if (rule.behavior == "overlap_judge") {
            resp.text = overlap_judge(request, rule.params);
        } else if (rule.behavior == "grounded_answer") {
            resp.text = grounded_answer(request, rule.params);
        } else {
            resp.text = rewrite(request);
        }
        return resp;
    }
    const auto h = fnv1a64(fmt::format("{}|{}|{}|{}", request.model, request.temperature, request.system_prompt,
                                       request.user_prompt),
                           fnv1a64(std::to_string(seed_)));
    resp.text = "mock-reply-" + hex64(h);
    return resp;
}

Embedding MockGateway::embed_one(std::string_view text) const {
    auto terms = content_terms(text);
    if (terms.empty()) terms = all_words(text);
    if (terms.empty()) terms.emplace_back(text);

    std::vector<double> acc(dimension_, 0.0);
    std::uint64_t seed_state = seed_;
    const std::uint64_t seed_mix = splitmix64(seed_state);
    for (const auto& term : terms) {
        std::uint64_t state = fnv1a64(term) ^ seed_mix;
        for (auto& a : acc) a += unit_uniform(state);
    }
    double norm = 0.0;
    for (double a : acc) norm += a * a;
    norm = std::sqrt(norm);
    Embedding out(dimension_);
    for (std::size_t d = 0; d < dimension_; ++d) {
        out[d] = static_cast<float>(norm > 0 ? acc[d] / norm : (d == 0 ? 1.0 : 0.0));
    }
    return out;
}

std::vector<Embedding> MockGateway::do_embed(std::span<const std::string> texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

}  // namespace irag
