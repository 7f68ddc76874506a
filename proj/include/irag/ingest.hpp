#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "irag/util.hpp"

namespace irag {

enum class IssueState { open, closed };

struct IssueRecord {
    std::int64_t issue_id = 0;
    std::string title;
    std::string body;
    std::vector<std::string> comments;
    IssueState state = IssueState::open;
    Timestamp created_at{};
    std::optional<Timestamp> closed_at;
    std::vector<std::string> labels;
    std::string source_url;
};

struct DocumentMetadata {
    std::int64_t issue_id = 0;
    std::string source_url;
    std::optional<Timestamp> closed_at;
    std::vector<std::string> labels;

    bool operator==(const DocumentMetadata&) const = default;
};

/// One issue rendered as text with `[TITLE]`, `[BODY]`, `[COMMENT k]` markers.
struct Document {
    std::string doc_id;  // issue-<issue_id>
    std::string text;
    DocumentMetadata metadata;
};

enum class ExportFormat { csv, json_lines };

/// Accepts "csv", "json_lines", "jsonl". Throws ConfigError otherwise.
ExportFormat parse_export_format(std::string_view tag);

struct ParseResult {
    std::vector<IssueRecord> records;
    std::size_t skipped = 0;
    /// One human-readable reason per skipped row, in input order.
    std::vector<std::string> skip_reasons;
};

/// Decodes a tracker export. CSV must carry the header
/// issue_id,title,body,comments,state,created_at,closed_at,labels,source_url
/// (any column order); `comments` and `labels` cells hold JSON string arrays.
/// Malformed rows are skipped and counted. Throws ParseError on invalid UTF-8
/// or broken CSV quoting. Text is returned as found; see normalize_issue().
ParseResult parse_issue_export(std::string_view raw, ExportFormat format);

/// Replaces `http(s)://...` runs with `<URL>`, collapses horizontal
/// whitespace to one space, caps newline runs at two, drops spaces around
/// line breaks, and trims. Idempotent.
std::string normalize_text(std::string_view raw);

IssueRecord normalize_issue(IssueRecord record);

struct FilterPolicy {
    bool closed_only = true;
    bool drop_duplicate_ids = true;
    /// Minimum code points across normalized title, body and comments.
    std::size_t min_chars = 40;
};

/// Order-preserving subsequence of `records` that passes `policy`.
std::vector<IssueRecord> filter_issues(std::span<const IssueRecord> records,
                                       const FilterPolicy& policy = {});

std::string doc_id_for(std::int64_t issue_id);

std::vector<Document> to_documents(std::span<const IssueRecord> records);

nlohmann::json metadata_to_json(const DocumentMetadata& meta);
DocumentMetadata metadata_from_json(const nlohmann::json& j);

/// `corpus.jsonl`: one Document object per line.
std::string write_corpus(std::span<const Document> docs);
std::vector<Document> read_corpus(std::string_view jsonl);

}  // namespace irag
