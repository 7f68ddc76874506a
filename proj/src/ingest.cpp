#include "irag/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "irag/errors.hpp"

namespace irag {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 9> kColumns = {
    "issue_id", "title", "body", "comments", "state", "created_at", "closed_at", "labels", "source_url"};

/// Fields of one issue before validation, as strings or JSON values.
struct RawRow {
    std::optional<std::string> issue_id, title, body, state, created_at, closed_at, source_url;
    json comments;
    json labels;
};

struct CsvRecord {
    std::vector<std::string> fields;
    std::size_t offset = 0;
};

// RFC 4180: fields separated by commas, optionally quoted with doubled quotes
// as escapes; CRLF or LF line endings; quoted fields may span lines.
std::vector<CsvRecord> split_csv(std::string_view data) {
    std::vector<CsvRecord> rows;
    CsvRecord current;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    bool row_has_content = false;
    std::size_t quote_offset = 0;
    current.offset = 0;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&](std::size_t next_offset) {
        if (row_has_content) {
            end_field();
            rows.push_back(std::move(current));
        }
        current = CsvRecord{};
        current.offset = next_offset;
        field.clear();
        field_started = false;
        row_has_content = false;
    };

    for (std::size_t i = 0; i < data.size(); ++i) {
        const char c = data[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < data.size() && data[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field_started && field.empty()) {
                    in_quotes = true;
                    quote_offset = i;
                    field_started = true;
                    row_has_content = true;
                } else {
                    throw ParseError("stray quote inside unquoted CSV field", i);
                }
                break;
            case ',':
                row_has_content = true;
                end_field();
                break;
            case '\r':
                if (i + 1 < data.size() && data[i + 1] == '\n') ++i;
                end_row(i + 1);
                break;
            case '\n':
                end_row(i + 1);
                break;
            default:
                field.push_back(c);
                field_started = true;
                row_has_content = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted CSV field", quote_offset);
    end_row(data.size());
    return rows;
}

std::optional<std::int64_t> parse_issue_id(const json& value) {
    if (value.is_number_integer()) {
        const auto id = value.get<std::int64_t>();
        return id > 0 ? std::optional(id) : std::nullopt;
    }
    if (!value.is_string()) return std::nullopt;
    const auto text = trim(value.get<std::string>());
    std::int64_t id = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, id);
    if (text.empty() || ec != std::errc{} || ptr != last || id <= 0) return std::nullopt;
    return id;
}

std::vector<std::string> parse_string_list(const json& value, const char* what) {
    std::vector<std::string> out;
    if (value.is_null()) return out;
    json list = value;
    if (value.is_string()) {
        const auto text = trim(value.get<std::string>());
        if (text.empty()) return out;
        list = json::parse(text, nullptr, false);
        if (list.is_discarded()) throw std::invalid_argument(std::string(what) + " is not a JSON array");
    }
    if (!list.is_array()) throw std::invalid_argument(std::string(what) + " is not a JSON array");
    for (const auto& item : list) {
        if (!item.is_string()) throw std::invalid_argument(std::string(what) + " holds a non-string");
        out.push_back(item.get<std::string>());
    }
    return out;
}

// Returns the record, or throws std::invalid_argument naming the defect.
IssueRecord build_record(const RawRow& row) {
    IssueRecord rec;
    const auto id = row.issue_id ? parse_issue_id(json(*row.issue_id)) : std::nullopt;
    if (!id) throw std::invalid_argument("missing or invalid issue_id");
    rec.issue_id = *id;
    if (!row.title || trim(*row.title).empty()) throw std::invalid_argument("missing title");
    rec.title = *row.title;
    rec.body = row.body.value_or("");
    rec.comments = parse_string_list(row.comments, "comments");
    rec.labels = parse_string_list(row.labels, "labels");
    rec.source_url = row.source_url.value_or("");

    const auto state = to_lower_ascii(trim(row.state.value_or("")));
    if (state == "closed") {
        rec.state = IssueState::closed;
    } else if (state == "open") {
        rec.state = IssueState::open;
    } else {
        throw std::invalid_argument("unknown state '" + state + "'");
    }

    const auto created = parse_utc_timestamp(trim(row.created_at.value_or("")));
    if (!created) throw std::invalid_argument("invalid created_at");
    rec.created_at = *created;
    const auto closed_text = trim(row.closed_at.value_or(""));
    if (!closed_text.empty()) {
        const auto closed = parse_utc_timestamp(closed_text);
        if (!closed) throw std::invalid_argument("invalid closed_at");
        rec.closed_at = *closed;
    }
    if (rec.state == IssueState::closed) {
        if (!rec.closed_at) throw std::invalid_argument("closed issue without closed_at");
        if (*rec.closed_at < rec.created_at) throw std::invalid_argument("closed_at before created_at");
    }
    return rec;
}

void add_row(ParseResult& result, const RawRow& row, std::size_t line) {
    try {
        result.records.push_back(build_record(row));
    } catch (const std::invalid_argument& e) {
        ++result.skipped;
        result.skip_reasons.push_back("row at line " + std::to_string(line) + ": " + e.what());
    }
}

std::size_t line_of(std::string_view data, std::size_t offset) {
    return 1 + static_cast<std::size_t>(std::count(data.begin(), data.begin() + offset, '\n'));
}

void parse_csv(std::string_view data, ParseResult& result) {
    const auto rows = split_csv(data);
    if (rows.empty()) return;

    const auto& header = rows.front().fields;
    std::array<std::optional<std::size_t>, kColumns.size()> index{};
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto name = to_lower_ascii(trim(header[i]));
        for (std::size_t c = 0; c < kColumns.size(); ++c) {
            if (name == kColumns[c]) index[c] = i;
        }
    }
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (!index[c]) throw ParseError("CSV header lacks column '" + std::string(kColumns[c]) + "'", 0);
    }

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& fields = rows[r].fields;
        const auto line = line_of(data, rows[r].offset);
        if (fields.size() != header.size()) {
            ++result.skipped;
            result.skip_reasons.push_back("row at line " + std::to_string(line) + ": expected " +
                                          std::to_string(header.size()) + " fields, found " +
                                          std::to_string(fields.size()));
            continue;
        }
        auto cell = [&](std::size_t c) -> std::optional<std::string> {
            const auto& v = fields[*index[c]];
            if (v.empty()) return std::nullopt;
            return v;
        };
        RawRow row;
        row.issue_id = cell(0);
        row.title = cell(1);
        row.body = cell(2);
        row.comments = cell(3) ? json(*cell(3)) : json();
        row.state = cell(4);
        row.created_at = cell(5);
        row.closed_at = cell(6);
        row.labels = cell(7) ? json(*cell(7)) : json();
        row.source_url = cell(8);
        add_row(result, row, line);
    }
}

std::optional<std::string> string_member(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    return std::nullopt;
}

void parse_json_lines(std::string_view data, ParseResult& result) {
    std::size_t line_no = 0;
    for (const auto& line : split_lines(data)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            ++result.skipped;
            result.skip_reasons.push_back("row at line " + std::to_string(line_no) + ": not a JSON object");
            continue;
        }
        RawRow row;
        row.issue_id = string_member(obj, "issue_id");
        row.title = string_member(obj, "title");
        row.body = string_member(obj, "body");
        row.state = string_member(obj, "state");
        row.created_at = string_member(obj, "created_at");
        row.closed_at = string_member(obj, "closed_at");
        row.source_url = string_member(obj, "source_url");
        row.comments = obj.value("comments", json());
        row.labels = obj.value("labels", json());
        add_row(result, row, line_no);
    }
}

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string replace_urls(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t scheme = 0;
        if (text.compare(i, 8, "https://") == 0) {
            scheme = 8;
        } else if (text.compare(i, 7, "http://") == 0) {
            scheme = 7;
        }
        if (scheme != 0 && i + scheme < text.size() && !is_ascii_space(text[i + scheme])) {
            std::size_t j = i + scheme;
            while (j < text.size() && !is_ascii_space(text[j])) ++j;
            out.append("<URL>");
            i = j;
        } else {
            out.push_back(text[i]);
            ++i;
        }
    }
    return out;
}

std::string collapse_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_ascii_space(text[i])) {
            out.push_back(text[i++]);
            continue;
        }
        std::size_t newlines = 0;
        const bool leading = out.empty();
        while (i < text.size() && is_ascii_space(text[i])) {
            if (text[i] == '\n') {
                ++newlines;
            } else if (text[i] == '\r') {
                ++newlines;
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            }
            ++i;
        }
        if (leading || i == text.size()) continue;
        if (newlines == 0) {
            out.push_back(' ');
        } else {
            out.append(std::min<std::size_t>(newlines, 2), '\n');
        }
    }
    return out;
}

std::size_t normalized_length(const IssueRecord& rec) {
    std::size_t total = utf8_length(normalize_text(rec.title)) + utf8_length(normalize_text(rec.body));
    for (const auto& c : rec.comments) total += utf8_length(normalize_text(c));
    return total;
}

}  // namespace

ExportFormat parse_export_format(std::string_view tag) {
    if (tag == "csv") return ExportFormat::csv;
    if (tag == "json_lines" || tag == "jsonl") return ExportFormat::json_lines;
    throw ConfigError("unknown export format '" + std::string(tag) + "' (expected csv or json_lines)");
}

ParseResult parse_issue_export(std::string_view raw, ExportFormat format) {
    if (auto bad = find_invalid_utf8(raw)) throw ParseError("input is not valid UTF-8", *bad);
    if (raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);

    ParseResult result;
    if (format == ExportFormat::csv) {
        parse_csv(raw, result);
    } else {
        parse_json_lines(raw, result);
    }
    if (result.skipped > 0) {
        spdlog::warn("issue export: skipped {} malformed row(s)", result.skipped);
    }
    return result;
}

std::string normalize_text(std::string_view raw) { return collapse_whitespace(replace_urls(raw)); }

IssueRecord normalize_issue(IssueRecord record) {
    record.title = normalize_text(record.title);
    record.body = normalize_text(record.body);
    for (auto& c : record.comments) c = normalize_text(c);
    return record;
}

std::vector<IssueRecord> filter_issues(std::span<const IssueRecord> records, const FilterPolicy& policy) {
    std::vector<IssueRecord> kept;
    std::unordered_set<std::int64_t> seen;
    for (const auto& rec : records) {
        if (policy.drop_duplicate_ids && !seen.insert(rec.issue_id).second) continue;
        if (policy.closed_only && rec.state != IssueState::closed) continue;
        if (normalized_length(rec) < policy.min_chars) continue;
        kept.push_back(rec);
    }
    return kept;
}

std::string doc_id_for(std::int64_t issue_id) { return "issue-" + std::to_string(issue_id); }

std::vector<Document> to_documents(std::span<const IssueRecord> records) {
    auto section = [](std::string& out, std::string_view marker, std::string_view value) {
        if (!out.empty()) out.push_back('\n');
        out.append(marker);
        if (!value.empty()) {
            out.push_back(' ');
            out.append(value);
        }
    };
    std::vector<Document> docs;
    docs.reserve(records.size());
    for (const auto& rec : records) {
        Document doc;
        doc.doc_id = doc_id_for(rec.issue_id);
        section(doc.text, "[TITLE]", rec.title);
        section(doc.text, "[BODY]", rec.body);
        for (std::size_t k = 0; k < rec.comments.size(); ++k) {
            section(doc.text, "[COMMENT " + std::to_string(k + 1) + "]", rec.comments[k]);
        }
        doc.metadata = {rec.issue_id, rec.source_url, rec.closed_at, rec.labels};
        docs.push_back(std::move(doc));
    }
    return docs;
}

json metadata_to_json(const DocumentMetadata& meta) {
    return json{{"issue_id", meta.issue_id},
                {"source_url", meta.source_url},
                {"closed_at", meta.closed_at ? json(format_utc_timestamp(*meta.closed_at)) : json()},
                {"labels", meta.labels}};
}

DocumentMetadata metadata_from_json(const json& j) {
    DocumentMetadata meta;
    meta.issue_id = j.at("issue_id").get<std::int64_t>();
    meta.source_url = j.value("source_url", "");
    if (auto it = j.find("closed_at"); it != j.end() && it->is_string()) {
        meta.closed_at = parse_utc_timestamp(it->get<std::string>());
    }
    meta.labels = j.value("labels", std::vector<std::string>{});
    return meta;
}

std::string write_corpus(std::span<const Document> docs) {
    std::string out;
    for (const auto& doc : docs) {
        json j{{"doc_id", doc.doc_id}, {"text", doc.text}, {"metadata", metadata_to_json(doc.metadata)}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<Document> read_corpus(std::string_view jsonl) {
    std::vector<Document> docs;
    std::unordered_set<std::string> ids;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(jsonl)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            Document doc;
            doc.doc_id = j.at("doc_id").get<std::string>();
            doc.text = j.at("text").get<std::string>();
            doc.metadata = metadata_from_json(j.at("metadata"));
            if (doc.text.empty()) throw LoadError("document text is empty", line_no);
            if (!ids.insert(doc.doc_id).second) throw LoadError("duplicate doc_id " + doc.doc_id, line_no);
            docs.push_back(std::move(doc));
        } catch (const json::exception& e) {
            throw LoadError(std::string("invalid corpus line: ") + e.what(), line_no);
        }
    }
    return docs;
}

}  // namespace irag
