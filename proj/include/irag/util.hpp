#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace irag {

using Timestamp = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DDTHH:MM:SS` with a trailing `Z` or `+00:00`.
std::optional<Timestamp> parse_utc_timestamp(std::string_view text);
std::string format_utc_timestamp(Timestamp ts);

/// 64-bit FNV-1a. Stable across platforms; used for ids, checksums and mock seeding.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// SplitMix64 step; returns the next output and advances state.
std::uint64_t splitmix64(std::uint64_t& state);

/// Index of the first invalid UTF-8 byte, or nullopt if the input is valid.
std::optional<std::size_t> find_invalid_utf8(std::string_view bytes);
std::size_t utf8_length(std::string_view text);
/// Longest prefix with at most `max_chars` code points.
std::string utf8_truncate(std::string_view text, std::size_t max_chars);

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);

/// Replaces every `{{name}}` with its value. Unknown placeholders are left alone.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Runs `task(i)` for i in [0, count) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all threads have joined.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& task);

}  // namespace irag
