#include "pfagent/execution/sandbox.hpp"

#include <csignal>
#include <map>

#include "pfagent/util/backend.hpp"
#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/paths.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::execution {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kResultPrefix = "RESULT_JSON: ";

bool is_image(const fs::path& p) {
    const std::string ext = util::to_lower(p.extension().string());
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".svg" || ext == ".pdf";
}

using Snapshot = std::map<std::string, std::pair<fs::file_time_type, std::uintmax_t>>;

Snapshot image_snapshot(const fs::path& dir) {
    Snapshot snap;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file() || !is_image(entry.path())) continue;
        snap[entry.path().filename().string()] = {entry.last_write_time(), entry.file_size()};
    }
    return snap;
}

}  // namespace

std::string to_string(ExecutionError e) {
    switch (e) {
        case ExecutionError::None: return "None";
        case ExecutionError::Timeout: return "Timeout";
        case ExecutionError::MemoryExceeded: return "MemoryExceeded";
        case ExecutionError::NonzeroExit: return "NonzeroExit";
    }
    return "None";
}

const std::string& headless_preamble() {
    // Registered with the interpreter-shutdown hook when available because
    // it runs before pyplot's own atexit handler closes every figure.
    static const std::string line =
        "import sys as _pfa_sys, threading as _pfa_th; (getattr(_pfa_th, \"_register_atexit\", None) or "
        "__import__(\"atexit\").register)(lambda: _pfa_sys.modules.get(\"matplotlib.pyplot\") and "
        "[_pfa_sys.modules[\"matplotlib.pyplot\"].figure(n).savefig(\"figure_%d.png\" % n) "
        "for n in _pfa_sys.modules[\"matplotlib.pyplot\"].get_fignums()])\n";
    return line;
}

std::optional<json> parse_structured_result(const std::string& stdout_text) {
    const auto lines = util::split_lines(stdout_text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (it->rfind(kResultPrefix, 0) != 0) continue;
        json doc = json::parse(it->substr(std::string(kResultPrefix).size()), nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
        return doc;
    }
    return std::nullopt;
}

json ExecutionRecord::to_json() const {
    return {{"exit_status", exit_status},
            {"stdout", stdout_text},
            {"stderr", stderr_text},
            {"result", result ? *result : json(nullptr)},
            {"plot_files", plot_files},
            {"wall_time", wall_time},
            {"workspace", workspace.string()},
            {"script_file", script_file},
            {"error", to_string(error)}};
}

ExecutionRecord ExecutionRecord::from_json(const json& j) {
    ExecutionRecord r;
    r.exit_status = j.value("exit_status", -1);
    r.stdout_text = j.value("stdout", "");
    r.stderr_text = j.value("stderr", "");
    if (j.contains("result") && j["result"].is_object()) r.result = j["result"];
    r.plot_files = j.value("plot_files", std::vector<std::string>{});
    r.wall_time = j.value("wall_time", 0.0);
    r.workspace = j.value("workspace", "");
    r.script_file = j.value("script_file", "");
    const std::string e = j.value("error", "None");
    r.error = e == "Timeout" ? ExecutionError::Timeout
              : e == "MemoryExceeded" ? ExecutionError::MemoryExceeded
              : e == "NonzeroExit" ? ExecutionError::NonzeroExit
                                   : ExecutionError::None;
    return r;
}

ExecutionRecord execute_sandboxed(const GeneratedScript& script, const fs::path& workspace,
                                  const util::ProcessLimits& limits, const std::string& script_file) {
    if (script_file.find('/') != std::string::npos || script_file.find("..") != std::string::npos)
        throw Error("InvalidArgument", "script file name must be a plain name: " + script_file);
    fs::create_directories(workspace);
    const fs::path ws = fs::absolute(workspace).lexically_normal();
    util::write_file_atomic(ws / script_file, headless_preamble() + script.code);

    const Snapshot before = image_snapshot(ws);
    util::ProcessSpec spec;
    spec.argv = {util::python_executable().string(), script_file};
    spec.cwd = ws;
    spec.env = util::backend_environment(ws);
    spec.limits = limits;
    const auto res = util::run_process(spec);
    if (res.spawn_failed) throw Error("SandboxFailure", "could not start " + util::python_executable().string());

    ExecutionRecord rec;
    rec.workspace = ws;
    rec.script_file = script_file;
    rec.stdout_text = res.stdout_text;
    rec.stderr_text = res.stderr_text;
    rec.wall_time = res.wall_seconds;
    rec.exit_status = res.term_signal != 0 ? 128 + res.term_signal : res.exit_code;

    if (res.timed_out) {
        rec.error = ExecutionError::Timeout;
    } else if (res.stderr_text.find("MemoryError") != std::string::npos ||
               res.term_signal == SIGKILL || res.term_signal == SIGABRT) {
        rec.error = ExecutionError::MemoryExceeded;
    } else if (rec.exit_status != 0) {
        rec.error = ExecutionError::NonzeroExit;
    }
    rec.result = parse_structured_result(res.stdout_text);

    const Snapshot after = image_snapshot(ws);
    for (const auto& [name, stamp] : after) {
        auto it = before.find(name);
        if (it == before.end() || it->second != stamp) rec.plot_files.push_back(name);
    }
    return rec;
}

}  // namespace pfagent::execution
