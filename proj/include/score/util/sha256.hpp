#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace score {

std::array<uint8_t, 32> sha256(const uint8_t* data, size_t len);
std::array<uint8_t, 32> sha256(std::string_view data);

std::string to_hex(const uint8_t* data, size_t len);
std::string to_hex(const std::array<uint8_t, 32>& digest);

// 64-char lowercase hex digest of the input bytes.
std::string sha256_hex(std::string_view data);

bool is_hex_digest(std::string_view s);

}  // namespace score
