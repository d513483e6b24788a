#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace cegm::harness {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);
std::string to_hex(const Digest& d);
// Hex SHA-256 of a file's contents. Throws cegm::Error if unreadable.
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace cegm::harness
