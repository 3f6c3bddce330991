#include "pfagent/util/paths.hpp"

#include <cstdlib>

#ifndef PFAGENT_DATA_DIR
#define PFAGENT_DATA_DIR "data"
#endif
#ifndef PFAGENT_REPO_ROOT
#define PFAGENT_REPO_ROOT "."
#endif
#ifndef PFAGENT_PYTHON
#define PFAGENT_PYTHON "/usr/bin/python3"
#endif

namespace pfagent::util {

namespace {

std::filesystem::path env_or(const char* name, const char* fallback) {
    if (const char* v = std::getenv(name); v && *v) return v;
    return fallback;
}

}  // namespace

std::filesystem::path data_dir() { return env_or("PFAGENT_DATA_DIR", PFAGENT_DATA_DIR); }
std::filesystem::path repo_root() { return env_or("PFAGENT_REPO_ROOT", PFAGENT_REPO_ROOT); }
std::filesystem::path python_executable() { return env_or("PFAGENT_PYTHON", PFAGENT_PYTHON); }

}  // namespace pfagent::util
