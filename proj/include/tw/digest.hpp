#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tw {

// Lowercase hex SHA-256.
std::string sha256_hex(const void* data, size_t size);
std::string sha256_hex(const std::string& data);
std::string sha256_hex(const std::vector<uint8_t>& data);
std::string sha256_file(const std::filesystem::path& path);

// Digest of a whole directory tree: the sorted list of (relative path,
// file digest) lines, hashed again. Identical trees hash identically
// regardless of creation order or timestamps.
std::string sha256_tree(const std::filesystem::path& root);

}  // namespace tw
