#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/agent/session.hpp"
#include "pfagent/bench/oracle.hpp"
#include "pfagent/bench/scoring.hpp"
#include "pfagent/bench/suite.hpp"
#include "pfagent/evolution/evolution.hpp"

namespace pfagent::bench {

struct TurnResult {
    int turn_index = 0;
    std::string task;
    std::string prompt;
    TurnScore score;
    std::string status;          // TurnReport status, or "ProviderError"
    std::string error_excerpt;   // tail of stderr or the provider message

    nlohmann::json to_json() const;
    static TurnResult from_json(const nlohmann::json& j);
};

struct ScenarioResult {
    std::string scenario_id;
    std::string family;
    std::string source;
    std::vector<TurnResult> turns;
    double conversation_score = 0.0;
    bool pass = false;
    bool invalid = false;
    std::string invalid_reason;

    nlohmann::json to_json() const;
    static ScenarioResult from_json(const nlohmann::json& j);
};

struct SuiteReport {
    std::string mode;
    std::vector<ScenarioResult> per_scenario_scores;
    std::optional<double> scenario_pass_rate;
    std::vector<std::optional<double>> per_turn_pass_rates;            // turns 1..3
    std::map<std::string, std::optional<double>> per_family_pass_rates;
    std::map<std::string, std::optional<double>> per_cell_pass_rates;  // "<family>/<source>"
    std::map<std::string, std::optional<double>> dimension_averages;
    std::map<std::string, long long> failure_category_histogram;
    std::optional<double> mean_conversation_score;
    std::vector<std::string> invalid_scenarios;

    /// Recompute every aggregate from `per_scenario_scores`.
    void aggregate();
    nlohmann::json to_json() const;
    static SuiteReport from_json(const nlohmann::json& j);
};

struct RunOptions {
    agent::AgentConfig config;                       // config.mode selects the pipeline
    std::filesystem::path workspace_root;            // one sub-directory per scenario
    std::optional<std::filesystem::path> profile_path;
    std::shared_ptr<const agent::AgentResources> resources;   // loaded when null
    /// Overrides the provider the mode would build, e.g. with a scripted mock.
    std::function<std::shared_ptr<execution::CompletionProvider>(const ScenarioSpec&)> provider_factory;
    std::function<void(const ScenarioResult&)> on_scenario;
    OracleCache* oracle_cache = nullptr;             // a private cache when null
};

SuiteReport run_benchmark(const Suite& suite, const RunOptions& options);

/// Failed turns of valid scenarios as records for attribution.
std::vector<evolution::FailureRecord> failure_records(const SuiteReport& report);

/// Attribute the report's failures and fold them into the profile at `store`.
evolution::EvolutionProfile evolve_from_report(const SuiteReport& report, const evolution::ProfileStore& store,
                                               const evolution::SignatureLibrary& library,
                                               const evolution::PackRegistry& packs);

/// Plain-text summary table.
std::string format_report_table(const SuiteReport& report);

}  // namespace pfagent::bench
