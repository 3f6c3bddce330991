#pragma once

#include "pfagent/execution/script.hpp"
#include "pfagent/intent/types.hpp"
#include "pfagent/knowledge/context.hpp"
#include "pfagent/util/error.hpp"

namespace pfagent::execution {

class GateUnsupported : public Error {
public:
    explicit GateUnsupported(const std::string& message) : Error("GateUnsupported", message) {}
};

/// Deterministic script for a fully parameterized objective: load the case,
/// add new loads, replay the active ledger in order, run the power flow and
/// print the keys the objective's markers ask for. Device identifiers are
/// resolved against `inventory`.
GeneratedScript template_gate(const intent::ParsedObjective& objective, const knowledge::CaseInventory& inventory);

/// Identifier the gate gives the k-th (1-based) load added in `turn`.
std::string added_load_id(int turn, int k);

/// Tie-breaking key shared by the gate and the oracle: values closer than
/// 5e-9 to each other rank by position.
long long tie_key(double v);

}  // namespace pfagent::execution
