#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "irag/ingest.hpp"

namespace irag {

struct Chunk {
    std::string chunk_id;  // <doc_id>#<ordinal>
    std::string doc_id;
    std::string text;      // source[char_start, char_end), offsets in code points
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    DocumentMetadata metadata;

    bool operator==(const Chunk&) const = default;
};

struct ChunkingOptions {
    std::size_t chunk_size = 1000;
    std::size_t overlap = 200;
};

/// A half-open span [start, end) of the source text, in code points.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool operator==(const Span&) const = default;
};

/// Recursive splitting over the separators "\n\n", "\n", " ", "". Each level
/// cuts at the coarsest separator, keeps the separator at the end of the
/// preceding piece, greedily packs pieces into spans of at most `chunk_size`
/// code points, and carries trailing pieces of up to `overlap` code points into the next
/// span. Oversized pieces recurse to the next separator; the last level is a
/// sliding window with step chunk_size - overlap. The spans cover the text
/// and their starts are non-decreasing. Throws ConfigError unless
/// chunk_size > overlap.
std::vector<Span> split_recursive(std::string_view text, const ChunkingOptions& opts);

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingOptions& opts = {});

}  // namespace irag
