#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/execution/sandbox.hpp"
#include "pfagent/execution/script.hpp"
#include "pfagent/intent/types.hpp"

namespace pfagent::reporting {

using nlohmann::json;

enum class TurnStatus { Success, ExecutionFailed, StaticCheckFailed, Answered, Rejected };

std::string to_string(TurnStatus s);

struct TurnReport {
    int turn_index = 0;
    TurnStatus status = TurnStatus::Success;
    std::string summary;
    json result = json::object();
    std::vector<std::string> plot_files;
    std::string code;
    std::string log_excerpt;
    std::vector<std::string> fix_history;   // fix-event ids
    bool fix_available = false;
    std::string error_class;                // empty on success

    json to_json() const;
    static TurnReport from_json(const json& j);
};

/// Template a report from an execution. Numbers in the summary are the
/// result's values rounded to four decimals.
TurnReport package_report(const execution::ExecutionRecord& record, const execution::GeneratedScript& script,
                          const intent::ParsedObjective& objective);

/// Report for a turn that stopped before execution.
TurnReport error_report(int turn_index, TurnStatus status, const std::string& error_class,
                        const std::string& message, const std::string& code = {});

/// Text-only report for explanation and debugging requests.
TurnReport answer_report(int turn_index, const std::string& text);

/// True when every number written in `summary` is within rounding to four
/// decimals of some numeric value anywhere in `result`.
bool summary_traceable(const std::string& summary, const json& result);

}  // namespace pfagent::reporting
