#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cbforge {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::byte> data);

/// 64-bit FNV-1a. Stable across platforms; used for feature hashing and
/// deterministic split assignment.
constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace cbforge
