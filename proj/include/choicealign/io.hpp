#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace choicealign::io {

std::string_view tool_version();

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partial file. Parent directories are created as needed.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text(const std::filesystem::path& path);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace choicealign::io
