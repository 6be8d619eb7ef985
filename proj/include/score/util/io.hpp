#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace score {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Regular files under root (or root itself if it is a file), sorted
// lexicographically for reproducible traversal order.
std::vector<std::filesystem::path> collect_files(
    const std::filesystem::path& root);

std::vector<std::string> split_lines(std::string_view text);

// Current UTC time, ISO 8601 with seconds resolution.
std::string iso8601_now();

}  // namespace score
