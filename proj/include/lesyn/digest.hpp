#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace lesyn {

std::string sha256_hex(std::string_view bytes);

/// SHA-256 over every regular file below `dir`, visited in sorted relative-path order;
/// each file contributes its relative path and contents.
std::string directory_digest(const std::filesystem::path& dir);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace lesyn
