#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pfagent::util {

std::string read_file(const std::filesystem::path& path);

/// Write through a temporary sibling and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

void append_file(const std::filesystem::path& path, const std::string& content);

/// Regular files directly inside `dir`, sorted by name.
std::vector<std::string> list_file_names(const std::filesystem::path& dir);

}  // namespace pfagent::util
