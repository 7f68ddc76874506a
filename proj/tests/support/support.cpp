#include "support.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "irag/errors.hpp"
#include "irag/util.hpp"

namespace irag::testing {

namespace fs = std::filesystem;

std::string source_path(const std::string& relative) { return std::string(IRAG_SOURCE_DIR) + "/" + relative; }

std::string read_source(const std::string& relative) { return read_file(source_path(relative)); }

nlohmann::json read_source_json(const std::string& relative) { return nlohmann::json::parse(read_source(relative)); }

TempDir::TempDir(const std::string& tag) {
    std::random_device rd;
    const auto base = fs::temp_directory_path() / ("irag-" + tag + "-" + hex64((std::uint64_t{rd()} << 32) | rd()));
    fs::create_directories(base);
    path_ = base.string();
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::unique_ptr<ModelGateway> mock_gateway(std::uint64_t seed, const std::string& playbook, std::size_t dimension) {
    GatewaySettings s;
    s.url = "mock:" + std::to_string(seed) + ":" + std::to_string(dimension);
    if (!playbook.empty()) s.playbook_path = source_path("tests/fixtures/playbooks/" + playbook + ".json");
    return make_gateway(s);
}

std::vector<Document> relay_documents() {
    auto parsed = parse_issue_export(read_source("tests/fixtures/relay_issues.jsonl"), ExportFormat::json_lines);
    std::vector<IssueRecord> normalized;
    for (auto& r : parsed.records) normalized.push_back(normalize_issue(std::move(r)));
    return to_documents(filter_issues(normalized));
}

RelayStack relay_stack(std::uint64_t seed, const std::string& playbook) {
    RelayStack st;
    st.documents = relay_documents();
    for (const auto& d : st.documents) {
        auto cs = chunk_document(d);
        st.chunks.insert(st.chunks.end(), cs.begin(), cs.end());
    }
    st.gateway = mock_gateway(seed, playbook);
    st.index = std::make_unique<VectorIndex>(build_index(st.chunks, *st.gateway));
    return st;
}

GenerationConfig deterministic_generation() {
    GenerationConfig cfg;
    cfg.clock = [] { return Timestamp{}; };
    return cfg;
}

ScriptedGateway::ScriptedGateway() : ModelGateway(GatewaySettings{"scripted", "scripted-chat", "", "", 1, 4, 0, 0, ""}) {}

void ScriptedGateway::on(const std::string& needle, std::vector<std::string> responses) {
    std::lock_guard lock(mu_);
    rules_.push_back({needle, std::move(responses), 0});
}

std::vector<ChatRequest> ScriptedGateway::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

ChatResponse ScriptedGateway::do_chat(const ChatRequest& request) {
    ++chat_calls_;
    const auto haystack = request.system_prompt + "\n" + request.user_prompt;
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    for (const auto& needle : fail_needles_) {
        if (haystack.find(needle) != std::string::npos) throw GatewayError("scripted failure", 503, "unavailable");
    }
    for (auto& rule : rules_) {
        if (haystack.find(rule.needle) == std::string::npos || rule.responses.empty()) continue;
        const auto i = std::min(rule.next, rule.responses.size() - 1);
        ++rule.next;
        return {rule.responses[i], request.model, 0};
    }
    return {"no scripted reply", request.model, 0};
}

std::vector<Embedding> ScriptedGateway::do_embed(std::span<const std::string> texts) {
    if (fail_embed_) throw GatewayError("scripted embedding failure", 500, "boom");
    return std::vector<Embedding>(texts.size(), embedding_);
}

Chunk make_chunk(const std::string& chunk_id, const std::string& text) {
    Chunk c;
    c.chunk_id = chunk_id;
    c.doc_id = chunk_id.substr(0, chunk_id.find('#'));
    c.text = text;
    c.char_end = utf8_length(text);
    c.metadata.issue_id = std::stoll(chunk_id.substr(6, chunk_id.find('#') - 6));
    c.metadata.source_url = "https://tracker.relay.example/issues/" + std::to_string(c.metadata.issue_id);
    return c;
}

std::string random_text(std::mt19937_64& rng, std::size_t length) {
    static const std::vector<std::string> atoms = {"a", "b", "xy", "word", "longerword", "\xc3\xa9", "\xe6\xbc\xa2",
                                                   "\xf0\x9f\x99\x82", " ", " ", "  ", "\n", "\n\n", "\t", "."};
    std::string out;
    out.reserve(length + 4);
    while (out.size() < length) out += atoms[rng() % atoms.size()];
    return out;
}

std::optional<std::string> span_violation(const std::vector<Span>& spans, std::size_t n, std::size_t chunk_size) {
    if (n == 0) return spans.empty() ? std::nullopt : std::optional<std::string>("spans for empty text");
    if (spans.empty()) return "no spans";
    if (spans.front().start != 0) return "first span does not start at 0";
    std::size_t reach = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto& s = spans[i];
        const auto at = " at span " + std::to_string(i);
        if (s.end <= s.start) return "empty span" + at;
        if (s.size() > chunk_size) return "span longer than chunk_size" + at;
        if (i > 0 && s.start < spans[i - 1].start) return "start decreases" + at;
        if (s.start > reach) return "gap before" + at;
        reach = std::max(reach, s.end);
    }
    if (reach != n) return "text end not covered";
    return std::nullopt;
}

VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dimension, bool ties) {
    std::vector<Chunk> chunks;
    std::vector<float> vectors;
    std::uniform_real_distribution<float> real(-1.0f, 1.0f);
    // ids are shuffled so id order and insertion order differ
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        chunks.push_back(make_chunk("issue-" + std::to_string(1 + ids[i] % 7) + "#" + std::to_string(ids[i]),
                                    "chunk " + std::to_string(ids[i])));
        for (std::size_t d = 0; d < dimension; ++d) {
            vectors.push_back(ties ? static_cast<float>(static_cast<int>(rng() % 3) - 1) : real(rng));
        }
    }
    return VectorIndex(dimension, "random", std::move(chunks), std::move(vectors));
}

std::vector<std::string> brute_force_top_k(const VectorIndex& index, std::span<const float> query, std::size_t k) {
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto v = index.vector(i);
        double s = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) s += static_cast<double>(v[d]) * static_cast<double>(query[d]);
        all.emplace_back(s, index.chunks()[i].chunk_id);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
    return out;
}

std::optional<std::string> golden_mismatch(const std::string& name, const std::string& actual) {
    const auto path = source_path("tests/golden/" + name);
    if (const char* update = std::getenv("IRAG_UPDATE_GOLDEN"); update && std::string(update) == "1") {
        write_file(path, actual);
        return std::nullopt;
    }
    std::string expected;
    try {
        expected = read_file(path);
    } catch (const Error&) {
        return "golden file " + path + " is missing; rerun with IRAG_UPDATE_GOLDEN=1";
    }
    if (expected == actual) return std::nullopt;
    std::size_t i = 0;
    while (i < expected.size() && i < actual.size() && expected[i] == actual[i]) ++i;
    return "golden " + name + " differs at byte " + std::to_string(i) + ": expected '" +
           expected.substr(i, 40) + "', got '" + actual.substr(i, 40) + "'";
}

RankedContext make_context(const std::vector<std::pair<std::string, double>>& ids_and_relevance) {
    RankedContext ctx;
    ctx.query = "fixture";
    for (const auto& [id, rel] : ids_and_relevance) {
        ctx.chunks.push_back({make_chunk(id, "Text of " + id + ". It explains the behavior in detail."), rel});
    }
    return ctx;
}

}  // namespace irag::testing
