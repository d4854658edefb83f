#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hypoloop {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::byte> data);

// First 8 bytes of SHA-256 as an integer; used to derive independent seeds.
std::uint64_t hash64(std::string_view data);

std::string base64_encode(std::span<const std::byte> data);

std::string read_file(const std::filesystem::path& path);
std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

// Writes to `<path>.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view s);

// printf-style "%.*f" without locale surprises.
std::string format_fixed(double value, int decimals);

// Round-trip representation of a double ("%.17g"), "nan"/"inf" spelled out.
std::string format_double(double value);

}  // namespace hypoloop
