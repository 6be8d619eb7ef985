#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace score {

std::string base64_encode(const uint8_t* data, size_t len);
std::string base64_encode(std::string_view data);

// Strict decode of standard-alphabet base64; throws FormatError on
// bad characters or bad padding.
std::vector<uint8_t> base64_decode(std::string_view text);

std::string base64_decode_string(std::string_view text);

}  // namespace score
