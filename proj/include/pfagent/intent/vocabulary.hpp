#pragma once

#include <filesystem>
#include <regex>
#include <string>
#include <vector>

#include "pfagent/intent/types.hpp"

namespace pfagent::intent {

struct ParamSpec {
    std::string name;
    std::string unit;          // factor, percent_increase, voltage_pu, power_mw, bus, bus_pair, line_list, threshold, const
    std::vector<int> groups;
    int unit_group = 0;        // capture holding an explicit unit, 0 if none
    json value;                // for unit == "const"
};

struct PatternEntry {
    MarkerKind marker;
    std::string source;
    std::regex re;
    std::vector<ParamSpec> params;
};

struct ClassifierRules {
    std::vector<std::regex> code_markers;
    std::vector<std::regex> debug_phrases;
    std::vector<std::regex> explain_markers;
};

/// Marker phrases and request-type detectors. Loaded from a data file and
/// extended at session start with overrides from the evolution profile.
class Vocabulary {
public:
    static Vocabulary from_json(const json& doc);
    static Vocabulary load(const std::filesystem::path& path);
    static Vocabulary load_default();

    /// A raw entry: {"marker", "patterns": [...], "params": [...]}.
    void add_pattern_override(const json& entry);
    /// A phrase template such as "LineOutage|corridor {bus_a}-{bus_b}".
    void add_marker_override(const std::string& spec);

    const std::vector<PatternEntry>& entries() const { return entries_; }
    const ClassifierRules& classifier() const { return classifier_; }
    int version() const { return version_; }

private:
    void add_entry(const json& entry);

    int version_ = 0;
    std::vector<PatternEntry> entries_;
    ClassifierRules classifier_;
};

/// Compile a marker-override template into a vocabulary entry.
json compile_marker_template(const std::string& spec);

struct CaseAlias {
    std::string id;
    CaseFamily family = CaseFamily::Other;
    std::vector<std::regex> patterns;
};

class CaseAliases {
public:
    static CaseAliases from_json(const json& doc);
    static CaseAliases load(const std::filesystem::path& path);
    static CaseAliases load_default();

    /// Leftmost alias hit in `text`, if any.
    struct Hit {
        const CaseAlias* alias;
        std::size_t position;
    };
    std::optional<Hit> find(const std::string& text) const;
    const CaseAlias* by_id(const std::string& id) const;
    const std::vector<CaseAlias>& all() const { return aliases_; }

private:
    std::vector<CaseAlias> aliases_;
};

}  // namespace pfagent::intent
