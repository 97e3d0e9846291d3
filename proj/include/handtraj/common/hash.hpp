#pragma once

#include <string>
#include <string_view>

namespace handtraj {

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

// First 16 hex digits of the SHA-256; used for config and transcript hashes.
std::string short_hash(std::string_view bytes);

}  // namespace handtraj
