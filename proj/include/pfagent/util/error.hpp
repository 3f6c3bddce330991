#pragma once

#include <stdexcept>
#include <string>

namespace pfagent {

/// Base of every error the agent raises. `kind()` is the stable name used in
/// logs, reports and HTTP error bodies.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

}  // namespace pfagent
