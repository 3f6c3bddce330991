#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pfagent::util {

struct ProcessLimits {
    std::chrono::milliseconds wall_time{120'000};
    std::size_t memory_bytes = std::size_t{2} << 30;  // 0 disables the limit
};

struct ProcessSpec {
    std::vector<std::string> argv;
    std::filesystem::path cwd;
    // Complete environment of the child; the parent's is not inherited.
    std::map<std::string, std::string> env;
    std::string stdin_data;
    ProcessLimits limits;
};

struct ProcessResult {
    int exit_code = -1;   // valid when term_signal == 0
    int term_signal = 0;
    bool timed_out = false;
    bool spawn_failed = false;
    std::string stdout_text;
    std::string stderr_text;
    double wall_seconds = 0.0;
};

/// Run a child process in its own process group, feeding stdin and capturing
/// both output streams. The group is killed when the wall-time limit expires.
ProcessResult run_process(const ProcessSpec& spec);

}  // namespace pfagent::util
