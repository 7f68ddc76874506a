#include "irag/vector_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <spdlog/spdlog.h>

#include "irag/errors.hpp"
#include "irag/util.hpp"

namespace irag {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "IRAGIDX1";

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T le(const char* section) {
        const auto raw = take(sizeof(T), section);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
        }
        return static_cast<T>(v);
    }

    std::string_view take(std::size_t n, const char* section) {
        if (n > bytes_.size() - pos_) {
            throw IntegrityError("truncated: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                                     ", " + std::to_string(bytes_.size() - pos_) + " left",
                                 section);
        }
        const auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

double score_of(std::span<const float> a, std::span<const float> b, Similarity sim) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    if (sim == Similarity::dot) return dot;
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

Similarity parse_similarity(std::string_view tag) {
    if (tag == "dot") return Similarity::dot;
    if (tag == "cosine") return Similarity::cosine;
    throw ConfigError("unknown similarity '" + std::string(tag) + "' (expected dot or cosine)");
}

bool hit_before(const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
}

VectorIndex::VectorIndex(std::size_t dimension, std::string embedder_id, std::vector<Chunk> chunks,
                         std::vector<float> vectors)
    : dimension_(dimension), embedder_id_(std::move(embedder_id)), chunks_(std::move(chunks)),
      vectors_(std::move(vectors)) {
    if (dimension_ == 0) throw IntegrityError("index dimension must be positive");
    if (vectors_.size() != chunks_.size() * dimension_) {
        throw IntegrityError("expected " + std::to_string(chunks_.size() * dimension_) + " vector values, got " +
                             std::to_string(vectors_.size()));
    }
    by_id_.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!by_id_.emplace(chunks_[i].chunk_id, i).second) {
            throw IntegrityError("duplicate chunk_id " + chunks_[i].chunk_id);
        }
    }
}

std::span<const float> VectorIndex::vector(std::size_t i) const {
    return std::span<const float>(vectors_).subspan(i * dimension_, dimension_);
}

const Chunk* VectorIndex::find(std::string_view chunk_id) const {
    auto it = by_id_.find(std::string(chunk_id));
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

std::vector<SearchHit> VectorIndex::search(std::span<const float> query, std::size_t k, Similarity similarity) const {
    if (k == 0) throw PreconditionError("search k must be at least 1");
    if (query.size() != dimension_) {
        throw IntegrityError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                             std::to_string(dimension_));
    }
    struct Scored {
        double score;
        std::size_t index;
    };
    std::vector<Scored> scored(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) scored[i] = {score_of(query, vector(i), similarity), i};

    const auto take = std::min(k, scored.size());
    auto before = [&](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return chunks_[a.index].chunk_id < chunks_[b.index].chunk_id;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), before);

    std::vector<SearchHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& c = chunks_[scored[i].index];
        hits.push_back({c.chunk_id, scored[i].score, c});
    }
    return hits;
}

bool VectorIndex::operator==(const VectorIndex& other) const {
    if (dimension_ != other.dimension_ || embedder_id_ != other.embedder_id_ || chunks_ != other.chunks_ ||
        vectors_.size() != other.vectors_.size()) {
        return false;
    }
    return std::memcmp(vectors_.data(), other.vectors_.data(), vectors_.size() * sizeof(float)) == 0;
}

VectorIndex build_index(std::span<const Chunk> chunks, ModelGateway& gateway, const IndexBuildOptions& opts) {
    if (chunks.empty()) throw PreconditionError("empty corpus: no chunks to index");
    const auto batch_size = std::max<std::size_t>(1, opts.batch_size);
    const auto batches = (chunks.size() + batch_size - 1) / batch_size;

    std::vector<std::vector<Embedding>> results(batches);
    std::vector<char> done(batches, 0);
    try {
        parallel_for(batches, opts.workers, [&](std::size_t b) {
            const auto first = b * batch_size;
            const auto last = std::min(first + batch_size, chunks.size());
            std::vector<std::string> texts;
            texts.reserve(last - first);
            for (auto i = first; i < last; ++i) texts.push_back(chunks[i].text);
            results[b] = gateway.embed(texts);
            done[b] = 1;
        });
    } catch (const IntegrityError&) {
        throw;
    } catch (const std::exception& e) {
        std::size_t embedded = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            if (done[b]) embedded += std::min(batch_size, chunks.size() - b * batch_size);
        }
        const auto done_batches = static_cast<std::size_t>(std::count(done.begin(), done.end(), 1));
        throw IndexBuildError("index build aborted after " + std::to_string(done_batches) + " of " +
                                  std::to_string(batches) + " batches (" + std::to_string(embedded) + " of " +
                                  std::to_string(chunks.size()) + " chunks embedded): " + e.what(),
                              embedded, chunks.size());
    }

    const auto dimension = results.front().front().size();
    std::vector<float> vectors;
    vectors.reserve(chunks.size() * dimension);
    for (std::size_t b = 0; b < batches; ++b) {
        for (const auto& v : results[b]) {
            if (v.size() != dimension) {
                throw IntegrityError("batch " + std::to_string(b) + " returned dimension " + std::to_string(v.size()) +
                                     ", expected " + std::to_string(dimension));
            }
            vectors.insert(vectors.end(), v.begin(), v.end());
        }
    }
    spdlog::info("indexed {} chunks in {} batches, dimension {}", chunks.size(), batches, dimension);
    return VectorIndex(dimension, gateway.embedder_id(), {chunks.begin(), chunks.end()}, std::move(vectors));
}

json chunk_to_json(const Chunk& c) {
    return json{{"chunk_id", c.chunk_id},   {"doc_id", c.doc_id},     {"text", c.text},
                {"char_start", c.char_start}, {"char_end", c.char_end}, {"metadata", metadata_to_json(c.metadata)}};
}

Chunk chunk_from_json(const json& j) {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.char_start = j.at("char_start").get<std::size_t>();
    c.char_end = j.at("char_end").get<std::size_t>();
    c.metadata = metadata_from_json(j.at("metadata"));
    return c;
}

std::string serialize_index(const VectorIndex& index) {
    std::string payload;
    for (const auto& c : index.chunks()) {
        payload += chunk_to_json(c).dump();
        payload += '\n';
    }
    std::string out;
    out.reserve(64 + index.embedder_id().size() + payload.size() + index.vectors().size() * 4);
    out.append(kMagic);
    put_le<std::uint32_t>(out, VectorIndex::kFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dimension()));
    put_le<std::uint64_t>(out, index.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.embedder_id().size()));
    out.append(index.embedder_id());
    put_le<std::uint64_t>(out, payload.size());
    out.append(payload);
    for (float f : index.vectors()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

VectorIndex deserialize_index(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(kMagic.size(), "header") != kMagic) throw IntegrityError("bad magic bytes, not an index file", "header");
    const auto version = r.le<std::uint32_t>("header");
    if (version != VectorIndex::kFormatVersion) {
        throw VersionError("index format_version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(VectorIndex::kFormatVersion) +
                           "); rebuild it with `irag index build` from the corpus file");
    }
    const auto dimension = r.le<std::uint32_t>("header");
    const auto count = r.le<std::uint64_t>("header");
    if (dimension == 0) throw IntegrityError("dimension is zero", "header");
    const auto id_len = r.le<std::uint32_t>("embedder_id");
    const std::string embedder_id(r.take(id_len, "embedder_id"));
    const auto payload_len = r.le<std::uint64_t>("payload");
    const auto payload = r.take(payload_len, "payload");

    if (count > payload_len) {
        throw IntegrityError("header declares " + std::to_string(count) + " chunks but the payload has only " +
                                 std::to_string(payload_len) + " bytes",
                             "header");
    }
    std::vector<Chunk> chunks;
    chunks.reserve(count);
    std::size_t line_no = 0;
    for (const auto& line : split_lines(payload)) {
        ++line_no;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IntegrityError("chunk record " + std::to_string(line_no) + " is not JSON", "payload");
        try {
            chunks.push_back(chunk_from_json(j));
        } catch (const json::exception& e) {
            throw IntegrityError("chunk record " + std::to_string(line_no) + ": " + e.what(), "payload");
        }
    }
    if (chunks.size() != count) {
        throw IntegrityError("header declares " + std::to_string(count) + " chunks, payload holds " +
                                 std::to_string(chunks.size()),
                             "payload");
    }

    if (count != 0 && dimension > r.remaining() / 4 / count + 1) {
        throw IntegrityError("vector block shorter than count * dimension", "vectors");
    }
    const auto floats = count * dimension;
    if (r.remaining() != floats * 4) {
        throw IntegrityError("expected " + std::to_string(floats * 4) + " vector bytes, found " +
                                 std::to_string(r.remaining()),
                             "vectors");
    }
    std::vector<float> vectors(floats);
    for (auto& f : vectors) f = std::bit_cast<float>(r.le<std::uint32_t>("vectors"));
    return VectorIndex(dimension, embedder_id, std::move(chunks), std::move(vectors));
}

void save_index(const VectorIndex& index, const std::string& path) {
    const auto tmp = path + ".tmp";
    write_file(tmp, serialize_index(index));
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move " + tmp + " to " + path);
}

VectorIndex load_index(const std::string& path) { return deserialize_index(read_file(path)); }

}  // namespace irag
