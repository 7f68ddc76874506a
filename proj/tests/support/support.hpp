#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "irag/chunking.hpp"
#include "irag/eval.hpp"
#include "irag/explanation.hpp"
#include "irag/gateway.hpp"
#include "irag/ingest.hpp"
#include "irag/retrieval.hpp"
#include "irag/vector_index.hpp"

namespace irag::testing {

/// Absolute path of a file in the source tree.
std::string source_path(const std::string& relative);

std::string read_source(const std::string& relative);
nlohmann::json read_source_json(const std::string& relative);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

private:
    std::string path_;
};

/// Mock gateway built from a playbook file under tests/fixtures/playbooks.
std::unique_ptr<ModelGateway> mock_gateway(std::uint64_t seed, const std::string& playbook = "cooperative",
                                           std::size_t dimension = 64);

/// The fixture corpus taken through ingest, chunking and index build.
struct RelayStack {
    std::vector<Document> documents;
    std::vector<Chunk> chunks;
    std::unique_ptr<ModelGateway> gateway;
    std::unique_ptr<VectorIndex> index;
};

RelayStack relay_stack(std::uint64_t seed, const std::string& playbook = "cooperative");

std::vector<Document> relay_documents();

GenerationConfig deterministic_generation();

/// Gateway whose replies are scripted per prompt substring. Each rule serves
/// its responses in order and repeats the last one. Counts chat calls.
class ScriptedGateway final : public ModelGateway {
public:
    ScriptedGateway();

    /// Replies for requests whose system + user prompt contains `needle`.
    /// Rules are tried in insertion order.
    void on(const std::string& needle, std::vector<std::string> responses);
    /// Embeddings: every text maps to this vector unless `fail_embed` is set.
    void set_embedding(Embedding e) { embedding_ = std::move(e); }
    void fail_embed(bool fail) { fail_embed_ = fail; }
    /// Any chat request containing `needle` throws GatewayError.
    void fail_on(const std::string& needle) { fail_needles_.push_back(needle); }

    int chat_calls() const { return chat_calls_.load(); }
    std::vector<ChatRequest> requests() const;

    std::string embedder_id() const override { return "scripted"; }
    bool reachable() override { return true; }

protected:
    ChatResponse do_chat(const ChatRequest& request) override;
    std::vector<Embedding> do_embed(std::span<const std::string> texts) override;

private:
    struct Rule {
        std::string needle;
        std::vector<std::string> responses;
        std::size_t next = 0;
    };
    mutable std::mutex mu_;
    std::vector<Rule> rules_;
    std::vector<std::string> fail_needles_;
    std::vector<ChatRequest> requests_;
    Embedding embedding_{1.0f, 0.0f};
    bool fail_embed_ = false;
    std::atomic<int> chat_calls_{0};
};

/// Chunk with the given id; issue id parsed from "issue-<n>#k".
Chunk make_chunk(const std::string& chunk_id, const std::string& text);

/// Mixed-separator text of `length` bytes or a little more (multi-byte atoms
/// are kept whole): words, spaces, tabs, single and double newlines, non-ASCII.
std::string random_text(std::mt19937_64& rng, std::size_t length);

/// Checks that spans cover [0, n) without gaps, each fits `chunk_size`, and
/// starts never decrease. Returns a description of the first violation.
std::optional<std::string> span_violation(const std::vector<Span>& spans, std::size_t n, std::size_t chunk_size);

/// Index of `n` chunks with seeded vectors. With `ties`, coordinates are
/// small integers so many scores collide exactly.
VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dimension, bool ties);

/// Exhaustive oracle: every chunk scored by dot product, fully sorted by
/// (score desc, chunk_id asc), first k kept. Returns chunk ids.
std::vector<std::string> brute_force_top_k(const VectorIndex& index, std::span<const float> query, std::size_t k);

/// Compares `actual` with tests/golden/<name>. With IRAG_UPDATE_GOLDEN=1 the
/// file is rewritten instead. Returns a description of the mismatch.
std::optional<std::string> golden_mismatch(const std::string& name, const std::string& actual);

RankedContext make_context(const std::vector<std::pair<std::string, double>>& ids_and_relevance);

}  // namespace irag::testing
