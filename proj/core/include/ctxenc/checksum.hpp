#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ctxenc {

/// Lowercase hex SHA-256 of a whole file.
std::string sha256_hex_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of an in-memory buffer.
std::string sha256_hex(std::string_view bytes);

}  // namespace ctxenc
