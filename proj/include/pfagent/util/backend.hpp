#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pfagent/util/process.hpp"

namespace pfagent::util {

/// Environment for backend child processes. Temporary, cache and config
/// directories all point inside `workspace`.
std::map<std::string, std::string> backend_environment(const std::filesystem::path& workspace);

/// Run a short Python program against the backend with cwd = `workspace`.
ProcessResult run_backend_python(const std::string& code, const std::filesystem::path& workspace,
                                 const ProcessLimits& limits = {});

}  // namespace pfagent::util
