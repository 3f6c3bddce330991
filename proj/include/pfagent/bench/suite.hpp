#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/intent/types.hpp"

namespace pfagent::bench {

using nlohmann::json;

enum class TaskType {
    VoltageCheck,
    LoadAddition,
    LoadScaling,
    SlackSetpoint,
    PvSetpoint,
    TargetedLoad,
    TargetedGen,
    LineOutage,
    IslandingOutage,
    NMinus1,
    VoltageRanking,
    AngleRanking,
    VoltagePlot,
};

std::string to_string(TaskType t);
std::optional<TaskType> task_from_string(const std::string& s);
/// Tasks that change the case and so join the carried-forward state.
bool is_modification_task(TaskType t);
std::vector<TaskType> base_task_types();
/// Base tasks plus N-1 screening and outages that island part of the grid.
std::vector<TaskType> expanded_task_types();

struct TurnOp {
    TaskType task = TaskType::VoltageCheck;
    json params = json::object();

    bool operator==(const TurnOp&) const = default;
    json to_json() const;
    static TurnOp from_json(const json& j);
};

/// Ledger form of a modification op, or nothing for inspection tasks.
std::optional<intent::LedgerEntry> ledger_entry(const TurnOp& op, int turn_index);

struct WeightedCheck {
    double weight = 1.0;
    std::string pattern;      // ECMAScript regex searched in the code
    bool forbidden = false;
    std::string label;
    int min_count = 1;        // non-overlapping matches needed for a hit

    bool operator==(const WeightedCheck&) const = default;
    json to_json() const;
    static WeightedCheck from_json(const json& j);
};

struct ScenarioTurn {
    int turn_index = 1;
    TurnOp op;
    std::string prompt;
    int phrasing = 0;                             // index of the phrasing variant used
    std::vector<WeightedCheck> grounding;
    std::vector<WeightedCheck> continuity;
    std::vector<std::string> semantic_keys;       // dotted paths into RESULT_JSON
    std::optional<std::string> plot_file;

    bool operator==(const ScenarioTurn&) const = default;
    json to_json() const;
    static ScenarioTurn from_json(const json& j);
};

struct UploadSpec {
    std::string base_case;
    std::string file_name;
    double load_factor = 1.0;

    bool operator==(const UploadSpec&) const = default;
};

struct ScenarioSpec {
    std::string scenario_id;
    intent::CaseFamily family = intent::CaseFamily::IEEE14;
    intent::CaseSource source = intent::CaseSource::BuiltIn;
    std::string case_id;                      // built-in case the scenario derives from
    std::optional<UploadSpec> upload;
    std::uint64_t seed = 0;
    std::vector<ScenarioTurn> turns;          // exactly three

    /// Identifier a script must load: the built-in name or the uploaded file.
    std::string case_identifier() const;
    bool valid() const;

    bool operator==(const ScenarioSpec&) const = default;
    json to_json() const;
    static ScenarioSpec from_json(const json& j);
};

struct SuiteOptions {
    std::vector<intent::CaseFamily> families{intent::CaseFamily::IEEE14, intent::CaseFamily::IEEE39,
                                             intent::CaseFamily::Kundur, intent::CaseFamily::PJM5};
    std::vector<intent::CaseSource> sources{intent::CaseSource::BuiltIn, intent::CaseSource::Uploaded};
    std::vector<TaskType> task_types = base_task_types();
    int n_scenarios = 100;
    std::uint64_t seed = 7;
    /// Also phrase line outages in corridor language.
    bool corridor_phrasing = false;
};

struct Suite {
    SuiteOptions options;
    std::vector<ScenarioSpec> scenarios;

    json to_json() const;
    static Suite from_json(const json& j);
    std::string dump() const;   // canonical bytes written to suite files
};

/// Options for the 164-scenario suite with the harder tasks.
SuiteOptions expanded_suite_options(std::uint64_t seed = 7);

/// Deterministic under `options`. Throws Error("InvalidArgument") for n < 1
/// or empty family/source/task lists.
Suite generate_suite(const SuiteOptions& options);

Suite load_suite(const std::filesystem::path& path);
void save_suite(const std::filesystem::path& path, const Suite& suite);

/// Write the uploaded case file a scenario refers to into `workspace`.
void materialize_upload(const ScenarioSpec& spec, const std::filesystem::path& workspace);

std::string builtin_case_for(intent::CaseFamily f);

}  // namespace pfagent::bench
