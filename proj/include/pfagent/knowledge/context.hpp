#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/intent/types.hpp"
#include "pfagent/knowledge/retrieval.hpp"

namespace pfagent::knowledge {

using nlohmann::json;

struct CodeExample {
    std::string title;
    std::vector<std::string> task_tags;
    std::string code;
};

std::vector<CodeExample> load_code_examples(const std::filesystem::path& path);

/// Task tags implied by an objective's markers; always includes "power_flow".
std::vector<std::string> objective_tags(const intent::ParsedObjective& objective);

/// Examples with the largest tag overlap, file order on ties.
std::vector<CodeExample> select_examples(const std::vector<CodeExample>& examples,
                                         const intent::ParsedObjective& objective, std::size_t n = 2);

struct InventoryDevice {
    std::string kind;             // Bus, Line, PQ, PV, Slack, Shunt
    std::string idx;
    std::vector<int> buses;
};

struct CaseInventory {
    std::string case_label;
    std::vector<InventoryDevice> devices;
    std::string rendered;

    bool has(const std::string& kind, const std::string& idx) const;
    bool has_device_id(const std::string& idx) const;
    bool has_bus(int bus) const;
    std::vector<const InventoryDevice*> of_kind(const std::string& kind) const;

    json to_json() const;
    static CaseInventory from_backend_json(const json& doc, const std::string& case_label);
};

/// Load the case in the backend and list its devices. Throws
/// Error("CaseLoadFailure") carrying the backend's error text.
CaseInventory build_case_inventory(const intent::CaseReference& ref, const std::filesystem::path& workspace);

struct AdaptiveRuleSet {
    std::vector<std::string> guidance;
    std::vector<std::string> source_packs;
    bool empty() const { return guidance.empty(); }
};

struct PromptOptions {
    std::size_t budget_chars = 12000;
    std::size_t top_k = 3;
    bool include_retrieval = true;   // manual windows and code examples
};

struct PromptContext {
    intent::ParsedObjective objective;
    std::string user_message;
    std::vector<ScoredWindow> retrieved_windows;
    std::vector<CodeExample> examples;
    CaseInventory inventory;
    AdaptiveRuleSet rules;
    std::string compaction;
    std::string continuity_state;
    std::string system_prompt;
    std::vector<std::string> truncation_log;
};

/// Render the ledger and prior turn summaries into a short text block.
std::string compaction_summary(const intent::ModificationLedger& ledger, const std::vector<std::string>& history);

std::string continuity_block(const intent::ParsedObjective& objective);

/// Build the system prompt. Throws Error("BudgetExhausted") when the case
/// inventory and continuity state alone exceed the budget.
PromptContext assemble_prompt(const intent::ParsedObjective& objective, const std::string& user_message,
                              const SimilarityIndex* index, const std::vector<CodeExample>& examples,
                              const CaseInventory& inventory, const AdaptiveRuleSet& rules,
                              const std::vector<std::string>& history, const PromptOptions& options = {});

/// Text of one sentinel-delimited section of a rendered prompt, if present.
std::optional<std::string> prompt_section(const std::string& prompt, const std::string& name);

}  // namespace pfagent::knowledge
