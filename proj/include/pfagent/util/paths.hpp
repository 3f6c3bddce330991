#pragma once

#include <filesystem>

namespace pfagent::util {

/// Shipped data files (vocabulary, manual, signature library...).
/// `PFAGENT_DATA_DIR` in the environment overrides the build-time default.
std::filesystem::path data_dir();

/// Root of the source tree, indexed by the fixer.
std::filesystem::path repo_root();

/// Python interpreter used for the backend.
std::filesystem::path python_executable();

}  // namespace pfagent::util
