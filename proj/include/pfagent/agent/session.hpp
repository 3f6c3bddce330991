#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/evolution/evolution.hpp"
#include "pfagent/execution/provider.hpp"
#include "pfagent/execution/script.hpp"
#include "pfagent/execution/sandbox.hpp"
#include "pfagent/execution/simulated.hpp"
#include "pfagent/execution/static_check.hpp"
#include "pfagent/fixer/fixer.hpp"
#include "pfagent/intent/parser.hpp"
#include "pfagent/knowledge/context.hpp"
#include "pfagent/reporting/log.hpp"
#include "pfagent/reporting/report.hpp"

namespace pfagent::agent {

using nlohmann::json;

/// Provider configurations compared by the benchmark.
enum class AgentMode { BaseModel, FineTuned, Rag, FineTunedRag, Mock, TemplateGate };

std::string to_string(AgentMode m);
/// Accepts "base", "fine-tuned", "rag", "fine-tuned-rag", "mock", "template-gate".
std::optional<AgentMode> mode_from_string(const std::string& s);
bool uses_gate(AgentMode m);
bool uses_retrieval(AgentMode m);

struct AgentConfig {
    AgentMode mode = AgentMode::TemplateGate;
    int max_attempts = 3;
    bool static_validation = true;
    util::ProcessLimits limits{std::chrono::milliseconds{120'000}, std::size_t{2} << 30};
    bool fix_validate_locally = true;
    int fix_retry_limit = 3;
    std::size_t fix_top_k = 6;
    execution::HttpProviderConfig http;
    std::string fine_tuned_model = "ft:pfsim-coder";
    execution::SimulatedCoderOptions simulated;

    /// The API key is never written out; `api_key_set` says whether one is held.
    json to_json() const;
    /// Fields absent from `j` keep their current values. Throws
    /// Error("InvalidConfig") on bad values.
    void update_from_json(const json& j);
};

/// Data shared read-only by every session.
struct AgentResources {
    intent::Vocabulary vocabulary;
    intent::CaseAliases aliases;
    std::shared_ptr<const knowledge::SimilarityIndex> manual_index;
    std::vector<knowledge::CodeExample> examples;
    execution::ForbiddenPatternSet forbidden;
    evolution::SignatureLibrary signatures;
    evolution::PackRegistry packs;

    static std::shared_ptr<AgentResources> load_default();

    /// Source-tree index for the fixer, built on first use.
    const fixer::RepoIndex& repo_index() const;

private:
    mutable std::once_flag repo_once_;
    mutable std::unique_ptr<fixer::RepoIndex> repo_;
};

/// Provider a mode calls for; template-gate mode needs none.
std::shared_ptr<execution::CompletionProvider> make_provider(const AgentConfig& config);

struct TurnRecord {
    int turn_index = 0;
    std::string text;
    reporting::TurnReport report;
    std::optional<intent::ParsedObjective> objective;
    std::optional<execution::GeneratedScript> script;
    std::optional<execution::ExecutionRecord> execution;
    std::vector<fixer::FixOutcome> fixes;
};

class Busy : public Error {
public:
    Busy() : Error("Busy", "another request is in progress for this session") {}
};

/// One conversation: parses turns, generates and checks scripts, runs them
/// in the session workspace and keeps the audit log.
class Session {
public:
    Session(std::string id, std::filesystem::path workspace, AgentConfig config,
            std::shared_ptr<const AgentResources> resources, std::shared_ptr<execution::CompletionProvider> provider,
            const evolution::ProfileStore* store = nullptr, reporting::GlobalEventStream* global = nullptr);

    /// Full pipeline for one user message. Attached files must already be in
    /// the workspace. Throws Busy, or ProviderError when the provider fails.
    reporting::TurnReport handle_turn(const std::string& text, const std::vector<std::string>& attached_files = {});

    /// Run user-supplied code as a new turn.
    reporting::TurnReport execute_code(const std::string& code);

    struct FixResult {
        fixer::FixOutcome outcome;
        fixer::FixEventResult event;
    };
    /// Throws Error("UnknownTurn"), Error("NothingToFix") or Error("NoProvider").
    FixResult fix(int turn_index);

    /// Throws Error("UnknownTurn") or Error("EmptyIssue").
    json feedback(int turn_index, const std::string& issue_text, const std::optional<std::string>& root_cause);

    void set_repair_provider(std::shared_ptr<execution::CompletionProvider> p) { repair_provider_ = std::move(p); }

    const std::string& id() const { return id_; }
    const std::filesystem::path& workspace() const { return workspace_; }
    const AgentConfig& config() const { return config_; }
    const reporting::SessionLog& log() const { return log_; }
    std::optional<intent::CaseReference> active_case() const;
    std::vector<TurnRecord> turns() const;
    std::optional<TurnRecord> turn(int turn_index) const;
    const evolution::EvolutionProfile& profile() const { return profile_; }

private:
    reporting::TurnReport run_turn(const std::string& text, const std::vector<std::string>& attached);
    const knowledge::CaseInventory& inventory_for(const intent::CaseReference& ref);
    reporting::TurnReport answer(const intent::ParsedObjective& obj, const std::string& text);
    TurnRecord* find_turn(int turn_index);

    std::string id_;
    std::filesystem::path workspace_;
    AgentConfig config_;
    std::shared_ptr<const AgentResources> res_;
    std::shared_ptr<execution::CompletionProvider> provider_;
    std::shared_ptr<execution::CompletionProvider> repair_provider_;
    const evolution::ProfileStore* store_;
    evolution::EvolutionProfile profile_;
    intent::Vocabulary vocab_;
    knowledge::AdaptiveRuleSet rules_;
    reporting::SessionLog log_;

    std::mutex busy_;
    mutable std::mutex state_mu_;
    intent::SessionIntentState intent_state_;
    std::map<std::string, knowledge::CaseInventory> inventories_;
    std::vector<TurnRecord> records_;
    std::vector<std::string> history_;
};

}  // namespace pfagent::agent
