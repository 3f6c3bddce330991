#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/execution/script.hpp"
#include "pfagent/util/process.hpp"

namespace pfagent::execution {

enum class ExecutionError { None, Timeout, MemoryExceeded, NonzeroExit };

std::string to_string(ExecutionError e);

struct ExecutionRecord {
    int exit_status = -1;
    std::string stdout_text;
    std::string stderr_text;
    std::optional<nlohmann::json> result;
    std::vector<std::string> plot_files;
    double wall_time = 0.0;
    std::filesystem::path workspace;
    std::string script_file;           // name of the executed file inside workspace
    ExecutionError error = ExecutionError::None;

    bool ok() const { return error == ExecutionError::None; }
    nlohmann::json to_json() const;
    static ExecutionRecord from_json(const nlohmann::json& j);
};

/// Line prepended to every executed script. It saves any figure still open
/// at exit into the working directory and never imports a plotting library
/// itself.
const std::string& headless_preamble();

/// Parse the last stdout line starting with "RESULT_JSON: ". Malformed or
/// non-object payloads give no result.
std::optional<nlohmann::json> parse_structured_result(const std::string& stdout_text);

/// Write `script` into `workspace` as `script_file` (preamble first) and run
/// it there. Failures are reported through `ExecutionRecord::error`;
/// Error("SandboxFailure") is thrown only when the interpreter cannot start.
ExecutionRecord execute_sandboxed(const GeneratedScript& script, const std::filesystem::path& workspace,
                                  const util::ProcessLimits& limits = {},
                                  const std::string& script_file = "script.py");

}  // namespace pfagent::execution
