#pragma once

#include <filesystem>
#include <random>
#include <string>

#ifndef PFAGENT_TEST_TMP
#define PFAGENT_TEST_TMP "/tmp/pfagent_test"
#endif

namespace testutil {

/// Fresh empty directory under the build tree.
inline std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::path(PFAGENT_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
