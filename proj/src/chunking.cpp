#include "irag/chunking.hpp"

#include <array>
#include <deque>
#include <string_view>

#include "irag/errors.hpp"

namespace irag {

namespace {

constexpr std::array<std::u32string_view, 4> kSeparators = {U"\n\n", U"\n", U" ", U""};

std::u32string decode_utf8(std::string_view text, std::vector<std::size_t>& byte_offsets) {
    std::u32string out;
    out.reserve(text.size());
    byte_offsets.clear();
    byte_offsets.reserve(text.size() + 1);
    std::size_t i = 0;
    while (i < text.size()) {
        byte_offsets.push_back(i);
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        char32_t cp = c;
        if (c >= 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else if (c >= 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if (c >= 0xC0) {
            len = 2;
            cp = c & 0x1F;
        }
        for (std::size_t k = 1; k < len && i + k < text.size(); ++k) {
            cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
        }
        out.push_back(cp);
        i += len;
    }
    byte_offsets.push_back(text.size());
    return out;
}

class RecursiveSplitter {
public:
    RecursiveSplitter(std::u32string_view text, const ChunkingOptions& opts) : text_(text), opts_(opts) {}

    std::vector<Span> run() {
        std::vector<Span> out;
        if (!text_.empty()) split({0, text_.size()}, 0, out);
        return out;
    }

private:
    void split(Span span, std::size_t level, std::vector<Span>& out) const {
        if (span.size() <= opts_.chunk_size) {
            out.push_back(span);
            return;
        }
        const auto sep = kSeparators[level];
        if (sep.empty()) {
            sliding_window(span, out);
            return;
        }
        auto pieces = cut(span, sep);
        if (pieces.size() == 1) {
            split(span, level + 1, out);
            return;
        }
        merge(pieces, level, out);
    }

    void sliding_window(Span span, std::vector<Span>& out) const {
        const auto step = opts_.chunk_size - opts_.overlap;
        for (auto start = span.start;; start += step) {
            const auto end = std::min(start + opts_.chunk_size, span.end);
            out.push_back({start, end});
            if (end == span.end) break;
        }
    }

    // Pieces tile the span; each separator stays with the piece before it.
    std::vector<Span> cut(Span span, std::u32string_view sep) const {
        std::vector<Span> pieces;
        auto start = span.start;
        auto pos = span.start;
        while (pos < span.end) {
            const auto hit = text_.find(sep, pos);
            if (hit == std::u32string_view::npos || hit + sep.size() > span.end) break;
            const auto piece_end = hit + sep.size();
            pieces.push_back({start, piece_end});
            start = piece_end;
            pos = piece_end;
        }
        if (start < span.end) pieces.push_back({start, span.end});
        return pieces;
    }

    void merge(const std::vector<Span>& pieces, std::size_t level, std::vector<Span>& out) const {
        std::deque<Span> current;
        std::size_t current_len = 0;
        auto emit = [&] {
            if (!current.empty()) out.push_back({current.front().start, current.back().end});
        };
        for (const auto& piece : pieces) {
            if (piece.size() > opts_.chunk_size) {
                emit();
                current.clear();
                current_len = 0;
                split(piece, level + 1, out);
                continue;
            }
            if (!current.empty() && current_len + piece.size() > opts_.chunk_size) {
                emit();
                while (!current.empty() &&
                       (current_len > opts_.overlap || current_len + piece.size() > opts_.chunk_size)) {
                    current_len -= current.front().size();
                    current.pop_front();
                }
            }
            current.push_back(piece);
            current_len += piece.size();
        }
        emit();
    }

    std::u32string_view text_;
    ChunkingOptions opts_;
};

void check_options(const ChunkingOptions& opts) {
    if (opts.chunk_size < 1) throw ConfigError("chunk_size must be at least 1");
    if (opts.chunk_size <= opts.overlap) {
        throw ConfigError("chunk_size (" + std::to_string(opts.chunk_size) + ") must exceed overlap (" +
                          std::to_string(opts.overlap) + ")");
    }
}

}  // namespace

std::vector<Span> split_recursive(std::string_view text, const ChunkingOptions& opts) {
    check_options(opts);
    std::vector<std::size_t> offsets;
    const auto cps = decode_utf8(text, offsets);
    return RecursiveSplitter(cps, opts).run();
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingOptions& opts) {
    check_options(opts);
    std::vector<std::size_t> offsets;
    const auto cps = decode_utf8(doc.text, offsets);
    const auto spans = RecursiveSplitter(cps, opts).run();

    std::vector<Chunk> chunks;
    chunks.reserve(spans.size());
    for (std::size_t k = 0; k < spans.size(); ++k) {
        const auto& s = spans[k];
        Chunk c;
        c.chunk_id = doc.doc_id + "#" + std::to_string(k);
        c.doc_id = doc.doc_id;
        c.char_start = s.start;
        c.char_end = s.end;
        c.text = doc.text.substr(offsets[s.start], offsets[s.end] - offsets[s.start]);
        c.metadata = doc.metadata;
        chunks.push_back(std::move(c));
    }
    return chunks;
}

}  // namespace irag
