#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "irag/chunking.hpp"
#include "irag/gateway.hpp"

namespace irag {

enum class Similarity { dot, cosine };

Similarity parse_similarity(std::string_view tag);

struct SearchHit {
    std::string chunk_id;
    double score = 0.0;
    Chunk chunk;
};

/// Exact embedding store over chunks. Immutable after construction, so one
/// instance can serve concurrent searches.
class VectorIndex {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    /// `vectors` holds chunks.size() * dimension floats, row-major in chunk
    /// order. Throws IntegrityError on size mismatch or duplicate chunk ids.
    VectorIndex(std::size_t dimension, std::string embedder_id, std::vector<Chunk> chunks,
                std::vector<float> vectors);

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return chunks_.size(); }
    const std::string& embedder_id() const { return embedder_id_; }
    const std::vector<Chunk>& chunks() const { return chunks_; }
    std::span<const float> vector(std::size_t i) const;
    const std::vector<float>& vectors() const { return vectors_; }
    const Chunk* find(std::string_view chunk_id) const;

    /// Top min(k, size()) hits by brute-force scoring, ordered by
    /// (score desc, chunk_id asc). Throws IntegrityError on dimension
    /// mismatch and PreconditionError when k == 0.
    std::vector<SearchHit> search(std::span<const float> query, std::size_t k,
                                  Similarity similarity = Similarity::dot) const;

    bool operator==(const VectorIndex& other) const;

private:
    std::size_t dimension_;
    std::string embedder_id_;
    std::vector<Chunk> chunks_;
    std::vector<float> vectors_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Sort order shared by every ranked list of hits.
bool hit_before(const SearchHit& a, const SearchHit& b);

struct IndexBuildOptions {
    std::size_t batch_size = 32;
    std::size_t workers = 1;
};

/// Embeds the chunks in batches through the gateway. The dimension comes from
/// the first batch; any later mismatch is an IntegrityError. A failing batch
/// aborts the build with an IndexBuildError that reports progress.
VectorIndex build_index(std::span<const Chunk> chunks, ModelGateway& gateway, const IndexBuildOptions& opts = {});

/// Binary layout, all integers little-endian:
///   "IRAGIDX1" | u32 format_version | u32 dimension | u64 count |
///   u32 embedder_id length | embedder_id bytes |
///   u64 payload length | payload (one chunk JSON object per line) |
///   count * dimension IEEE-754 binary32 values.
std::string serialize_index(const VectorIndex& index);

/// Throws VersionError for another format_version and IntegrityError naming
/// the offending section for truncated or inconsistent input.
VectorIndex deserialize_index(std::string_view bytes);

void save_index(const VectorIndex& index, const std::string& path);
VectorIndex load_index(const std::string& path);

nlohmann::json chunk_to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);

}  // namespace irag
