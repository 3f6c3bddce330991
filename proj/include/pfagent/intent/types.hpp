#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/util/error.hpp"

namespace pfagent::intent {

using nlohmann::json;

enum class RequestKind { RunnableCode, ConceptualExplanation, DebuggingInsight };
enum class CaseSource { BuiltIn, Uploaded };
enum class CaseFamily { IEEE14, IEEE39, Kundur, PJM5, Other };

enum class MarkerKind {
    VoltageCheck,
    LoadScaling,
    LoadAddition,
    SetpointAdjustment,
    TargetedLoadChange,
    TargetedGenChange,
    LineOutage,
    NMinus1,
    Ranking,
    PlotRequest,
};

std::string to_string(RequestKind k);
std::string to_string(CaseSource s);
std::string to_string(CaseFamily f);
std::string to_string(MarkerKind m);
std::optional<MarkerKind> marker_from_string(const std::string& s);
std::optional<CaseFamily> family_from_string(const std::string& s);

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const Span&) const = default;
};

struct UserTurn {
    int turn_index = 1;
    std::string text;
    std::vector<std::string> attached_files;
    std::string timestamp;
};

struct CaseReference {
    CaseSource source = CaseSource::BuiltIn;
    std::string identifier;
    CaseFamily family = CaseFamily::Other;

    bool operator==(const CaseReference&) const = default;
    json to_json() const;
    static CaseReference from_json(const json& j);
};

struct IntentMarker {
    MarkerKind marker = MarkerKind::VoltageCheck;
    Span span;
    json params = json::object();

    json to_json() const;
};

/// Keys a marker must carry before the template gate may fire.
std::vector<std::string> required_params(MarkerKind m, const json& params);
/// Every key a marker may carry.
std::vector<std::string> allowed_params(MarkerKind m);
bool params_complete(MarkerKind m, const json& params);

/// Markers that change the case rather than only inspect it.
bool is_modification(MarkerKind m);

struct LedgerEntry {
    int turn_index = 0;
    MarkerKind marker = MarkerKind::LoadScaling;
    json params = json::object();

    bool operator==(const LedgerEntry&) const = default;
    json to_json() const;
    static LedgerEntry from_json(const json& j);
};

/// Device/parameter a ledger entry writes, if later entries can override it.
/// Scaling and load additions accumulate and have no target.
std::optional<std::string> supersession_target(const LedgerEntry& e);

struct ModificationLedger {
    std::vector<LedgerEntry> entries;
    std::set<std::size_t> superseded;

    /// Append, superseding any live entry with the same target.
    void append(const LedgerEntry& e);
    std::vector<LedgerEntry> active() const;
    bool empty() const { return entries.empty(); }

    bool operator==(const ModificationLedger&) const = default;
    json to_json() const;
    static ModificationLedger from_json(const json& j);
};

struct ParsedObjective {
    int turn_index = 1;
    RequestKind request_type = RequestKind::RunnableCode;
    std::optional<CaseReference> case_ref;
    std::vector<IntentMarker> markers;
    ModificationLedger ledger;
    bool coding_gate_triggered = false;

    json to_json() const;
};

class MalformedParam : public Error {
public:
    MalformedParam(Span span, const std::string& message)
        : Error("MalformedParam", message), span_(span) {}
    Span span() const noexcept { return span_; }

private:
    Span span_;
};

}  // namespace pfagent::intent
