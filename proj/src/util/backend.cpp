#include "pfagent/util/backend.hpp"

#include "pfagent/grid/case_data.hpp"
#include "pfagent/util/paths.hpp"

namespace pfagent::util {

std::map<std::string, std::string> backend_environment(const std::filesystem::path& workspace) {
    const auto ws = std::filesystem::absolute(workspace);
    const auto scratch = ws / ".tmp";
    std::filesystem::create_directories(scratch);
    std::map<std::string, std::string> env{
        {"PATH", "/usr/local/bin:/usr/bin:/bin"},
        {"HOME", ws.string()},
        {"TMPDIR", scratch.string()},
        {"MPLCONFIGDIR", scratch.string()},
        {"XDG_CACHE_HOME", scratch.string()},
        {"MPLBACKEND", "Agg"},
        {"PYTHONPATH", std::filesystem::absolute(grid::backend_dir()).string()},
        {"PYTHONDONTWRITEBYTECODE", "1"},
        {"PYTHONIOENCODING", "utf-8"},
        {"OPENBLAS_NUM_THREADS", "1"},
        {"OMP_NUM_THREADS", "1"},
        {"MKL_NUM_THREADS", "1"},
        {"LANG", "C.UTF-8"},
    };
    return env;
}

ProcessResult run_backend_python(const std::string& code, const std::filesystem::path& workspace,
                                 const ProcessLimits& limits) {
    ProcessSpec spec;
    spec.argv = {python_executable().string(), "-"};
    spec.cwd = workspace;
    spec.env = backend_environment(workspace);
    spec.stdin_data = code;
    spec.limits = limits;
    return run_process(spec);
}

}  // namespace pfagent::util
