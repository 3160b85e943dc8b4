#pragma once

#include <string>

namespace dream::util {

// Hex-encoded SHA-256 of a byte string.
std::string sha256_hex(const std::string& data);

}  // namespace dream::util
