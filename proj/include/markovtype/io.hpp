#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace markovtype::io {

// Little-endian 32-bit float blobs.
void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count, const std::string& field);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace markovtype::io
