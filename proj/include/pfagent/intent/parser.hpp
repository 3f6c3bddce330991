#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pfagent/intent/types.hpp"
#include "pfagent/intent/vocabulary.hpp"

namespace pfagent::intent {

struct TurnContext {
    bool prior_error = false;   // previous turn ended in a failure
};

RequestKind classify_request(const std::string& text, const TurnContext& ctx, const Vocabulary& vocab);

/// Throws Error("AmbiguousCase") when an uploaded file and a different
/// built-in case are both named.
std::optional<CaseReference> detect_case_source(const std::string& text,
                                                const std::vector<std::string>& workspace_files,
                                                const std::vector<std::string>& attached_files,
                                                const std::optional<CaseReference>& active_case,
                                                const CaseAliases& aliases);

/// Throws MalformedParam when a matched phrase carries an unparsable value.
std::vector<IntentMarker> extract_markers(const std::string& text, const Vocabulary& vocab);

struct SessionIntentState {
    ModificationLedger ledger;
    std::optional<CaseReference> active_case;
    bool prior_error = false;
    int last_turn_index = 0;
};

/// Parse one turn and advance `state`. On error the state is left untouched.
ParsedObjective parse_turn(const UserTurn& turn, SessionIntentState& state, const Vocabulary& vocab,
                           const CaseAliases& aliases, const std::vector<std::string>& workspace_files);

}  // namespace pfagent::intent
