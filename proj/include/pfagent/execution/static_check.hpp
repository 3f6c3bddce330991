#pragma once

#include <filesystem>
#include <regex>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/execution/script.hpp"
#include "pfagent/intent/types.hpp"
#include "pfagent/knowledge/context.hpp"

namespace pfagent::execution {

struct ForbiddenPattern {
    std::string id;
    std::string pattern;
    std::string message;
    std::regex re;
};

struct ForbiddenPatternSet {
    std::vector<ForbiddenPattern> patterns;

    static ForbiddenPatternSet from_json(const nlohmann::json& doc);
    static ForbiddenPatternSet load(const std::filesystem::path& path);
    static ForbiddenPatternSet load_default();
    /// Constraint packs may add patterns; same-id entries are replaced.
    void add(const std::string& id, const std::string& pattern, const std::string& message);
};

struct ForbiddenHit {
    std::string pattern_id;
    int line = 0;      // 1-based line in the normalized code
    std::string text;
};

struct StaticCheckReport {
    bool syntax_ok = false;
    bool case_load_ok = false;
    bool index_resolution_ok = false;
    std::vector<ForbiddenHit> forbidden_hits;
    std::vector<std::string> messages;

    bool pass() const { return syntax_ok && case_load_ok && index_resolution_ok && forbidden_hits.empty(); }
    nlohmann::json to_json() const;
};

/// Parser check only; returns the parser message, or nothing when the code parses.
std::optional<std::string> python_syntax_error(const std::string& code, const std::filesystem::path& workspace);

StaticCheckReport static_check(const GeneratedScript& script, const intent::CaseReference& case_ref,
                               const knowledge::CaseInventory& inventory, const ForbiddenPatternSet& patterns,
                               const std::filesystem::path& workspace);

}  // namespace pfagent::execution
