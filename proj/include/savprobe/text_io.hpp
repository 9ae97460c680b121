#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace savprobe {

/// Calls `fn(line_number, line)` for every non-blank line of `path` with
/// `#` comments and surrounding whitespace removed. Throws ParseError if the
/// file cannot be opened.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, std::string_view)>& fn);

/// Splits on commas; fields are trimmed. No quoting support.
std::vector<std::string_view> split_csv(std::string_view line);

std::string_view trim(std::string_view s);

/// Writes `content` to `path` atomically enough for report files (truncate + write).
void write_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

} // namespace savprobe
