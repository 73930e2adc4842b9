#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lsdm {

std::string read_text_file(const std::filesystem::path& path);
std::vector<unsigned char> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_binary_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace lsdm
