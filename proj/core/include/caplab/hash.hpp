#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace caplab {

// SHA-256 hex digests used for artifact integrity checks throughout the
// pipeline (checkpoints, datasets, negatives, reports).
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace caplab
