#pragma once

#include <optional>

#include "pfagent/execution/provider.hpp"
#include "pfagent/intent/vocabulary.hpp"
#include "pfagent/knowledge/context.hpp"

namespace pfagent::execution {

/// Knobs that inject the two failure modes the benchmark studies.
struct SimulatedCoderOptions {
    /// From this turn on, modifications from earlier turns are ignored, as
    /// if the model lost track of the conversation.
    std::optional<int> drop_ledger_from_turn;
    /// Take lines out of service by writing the status array at a looked-up
    /// position instead of calling alter(), unless the prompt's rules say
    /// otherwise.
    bool misuse_line_outage = false;
};

/// Offline stand-in for a code model. It reads only what a real model would
/// see (the system prompt sections and the user message) and writes the
/// script a careful model would, subject to the injected failure knobs.
class SimulatedCoderProvider final : public CompletionProvider {
public:
    SimulatedCoderProvider(intent::Vocabulary vocab, SimulatedCoderOptions options = {});
    std::string complete(const std::vector<ChatMessage>& messages) override;
    std::string name() const override { return "simulated-coder"; }
    ProviderMode mode() const override { return ProviderMode::Mock; }

private:
    intent::Vocabulary vocab_;
    SimulatedCoderOptions options_;
};

/// Inverse of the rendered CASE_INVENTORY block.
knowledge::CaseInventory parse_rendered_inventory(const std::string& text);

}  // namespace pfagent::execution
