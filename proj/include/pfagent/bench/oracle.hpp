#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pfagent/bench/suite.hpp"
#include "pfagent/grid/case_data.hpp"
#include "pfagent/grid/power_flow.hpp"

namespace pfagent::bench {

/// Expected key -> value pairs for one turn. Numbers match within
/// `tolerance`; strings, integers, booleans and nulls match exactly.
struct SemanticKeySpec {
    std::vector<std::string> keys;
    json expected = json::object();   // key -> value
    double tolerance = 1e-4;
    bool oracle_converged = true;

    json to_json() const;
};

/// Case data after replaying turns 1..turn of a scenario, solved.
struct OracleState {
    grid::CaseData data;
    grid::PowerFlowResult pf;
};

grid::CaseData scenario_base_case(const ScenarioSpec& spec);

/// Apply one modification to case data in place. Inspection tasks are a no-op.
void apply_op(grid::CaseData& data, const TurnOp& op);

OracleState replay(const ScenarioSpec& spec, int turn_index);

/// Full structured result the turn's task calls for, computed directly
/// from the solved case data (same layout as a conforming script's output).
json oracle_result(const OracleState& state, const ScenarioSpec& spec, int turn_index);

/// Expected values for the turn's scored keys. A non-converged replay
/// expects only the convergence and islanding flags.
SemanticKeySpec verify_expected(const ScenarioSpec& spec, int turn_index);

/// Value at a dotted path; integer segments index arrays.
std::optional<json> lookup_path(const json& doc, const std::string& path);

/// verify_expected memoized by (scenario_id, turn).
class OracleCache {
public:
    SemanticKeySpec get(const ScenarioSpec& spec, int turn_index);
    std::size_t size() const;

private:
    mutable std::shared_mutex mu_;
    std::map<std::pair<std::string, int>, SemanticKeySpec> cache_;
};

}  // namespace pfagent::bench
