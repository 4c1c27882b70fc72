#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace warpcore {

/// Writes to a sibling temp file and renames it over `path`. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);

/// Throws IoError.
std::string read_file(const std::filesystem::path& path);

}  // namespace warpcore
