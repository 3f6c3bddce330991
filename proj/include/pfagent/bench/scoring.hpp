#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/bench/oracle.hpp"
#include "pfagent/bench/suite.hpp"
#include "pfagent/execution/sandbox.hpp"

namespace pfagent::bench {

inline constexpr double kFormatMax = 10.0;
inline constexpr double kGroundingMax = 25.0;
inline constexpr double kContinuityMax = 15.0;
inline constexpr double kExecutionMax = 20.0;
inline constexpr double kSemanticMax = 25.0;
inline constexpr double kArtifactMax = 5.0;

/// scale * max(0, matched required weight - matched forbidden weight) /
/// total required weight. Throws Error("InvalidArgument") without a
/// required check.
double weighted_pattern_score(const std::string& code, const std::vector<WeightedCheck>& checks, double scale);

/// 25 * matched / K. Numbers match within `spec.tolerance` (inclusive),
/// anything else must be equal; a missing key is a mismatch.
double semantic_score(const nlohmann::json& result, const SemanticKeySpec& spec);

/// What the agent produced for one turn.
struct TurnTranscript {
    std::string response_text;                        // raw provider or gate response
    std::string code;                                 // script as executed
    std::optional<execution::ExecutionRecord> execution;
};

struct TurnScore {
    double s_fmt = 0, s_gnd = 0, s_cont = 0, s_exec = 0, s_sem = 0, s_art = 0;
    bool art_applicable = false;   // plotless turns get s_art = 5 vacuously
    double total = 0;              // plain sum of the six
    bool pass = false;
    std::vector<std::string> failure_categories;   // format, grounding, continuity, execution, semantic, artifact

    nlohmann::json to_json() const;
    static TurnScore from_json(const nlohmann::json& j);
};

TurnScore score_turn(const TurnTranscript& transcript, const ScenarioTurn& turn, const SemanticKeySpec& expected);

}  // namespace pfagent::bench
