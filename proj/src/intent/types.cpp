#include "pfagent/intent/types.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace pfagent::intent {

namespace {

constexpr std::array<std::pair<MarkerKind, const char*>, 10> kMarkerNames{{
    {MarkerKind::VoltageCheck, "VoltageCheck"},
    {MarkerKind::LoadScaling, "LoadScaling"},
    {MarkerKind::LoadAddition, "LoadAddition"},
    {MarkerKind::SetpointAdjustment, "SetpointAdjustment"},
    {MarkerKind::TargetedLoadChange, "TargetedLoadChange"},
    {MarkerKind::TargetedGenChange, "TargetedGenChange"},
    {MarkerKind::LineOutage, "LineOutage"},
    {MarkerKind::NMinus1, "NMinus1"},
    {MarkerKind::Ranking, "Ranking"},
    {MarkerKind::PlotRequest, "PlotRequest"},
}};

constexpr std::array<std::pair<CaseFamily, const char*>, 5> kFamilyNames{{
    {CaseFamily::IEEE14, "IEEE14"},
    {CaseFamily::IEEE39, "IEEE39"},
    {CaseFamily::Kundur, "Kundur"},
    {CaseFamily::PJM5, "PJM5"},
    {CaseFamily::Other, "Other"},
}};

}  // namespace

std::string to_string(RequestKind k) {
    switch (k) {
        case RequestKind::RunnableCode: return "RunnableCode";
        case RequestKind::ConceptualExplanation: return "ConceptualExplanation";
        case RequestKind::DebuggingInsight: return "DebuggingInsight";
    }
    return "RunnableCode";
}

std::string to_string(CaseSource s) { return s == CaseSource::BuiltIn ? "BuiltIn" : "Uploaded"; }

std::string to_string(CaseFamily f) {
    for (const auto& [k, n] : kFamilyNames)
        if (k == f) return n;
    return "Other";
}

std::string to_string(MarkerKind m) {
    for (const auto& [k, n] : kMarkerNames)
        if (k == m) return n;
    return "VoltageCheck";
}

std::optional<MarkerKind> marker_from_string(const std::string& s) {
    for (const auto& [k, n] : kMarkerNames)
        if (s == n) return k;
    return std::nullopt;
}

std::optional<CaseFamily> family_from_string(const std::string& s) {
    for (const auto& [k, n] : kFamilyNames)
        if (s == n) return k;
    return std::nullopt;
}

json CaseReference::to_json() const {
    return {{"source", intent::to_string(source)}, {"identifier", identifier},
            {"family", intent::to_string(family)}};
}

CaseReference CaseReference::from_json(const json& j) {
    CaseReference c;
    c.source = j.at("source").get<std::string>() == "Uploaded" ? CaseSource::Uploaded : CaseSource::BuiltIn;
    c.identifier = j.at("identifier").get<std::string>();
    c.family = family_from_string(j.value("family", "Other")).value_or(CaseFamily::Other);
    return c;
}

json IntentMarker::to_json() const {
    return {{"marker", intent::to_string(marker)}, {"span", {span.begin, span.end}}, {"params", params}};
}

std::vector<std::string> required_params(MarkerKind m, const json& params) {
    switch (m) {
        case MarkerKind::VoltageCheck: return {};
        case MarkerKind::LoadScaling: return {"factor"};
        case MarkerKind::LoadAddition: return {"bus", "p"};
        case MarkerKind::SetpointAdjustment:
            if (params.value("device", "") == "pv") return {"device", "v", "bus"};
            return {"device", "v"};
        case MarkerKind::TargetedLoadChange: return {"bus", "p"};
        case MarkerKind::TargetedGenChange: return {"bus", "p"};
        case MarkerKind::LineOutage: return {"bus_pair"};
        case MarkerKind::NMinus1: return {"candidates"};
        case MarkerKind::Ranking: return {"kind", "threshold"};
        case MarkerKind::PlotRequest: return {"kind"};
    }
    return {};
}

std::vector<std::string> allowed_params(MarkerKind m) {
    switch (m) {
        case MarkerKind::LoadAddition: return {"bus", "p", "q"};
        case MarkerKind::SetpointAdjustment: return {"device", "v", "bus"};
        default: return required_params(m, json::object());
    }
}

bool params_complete(MarkerKind m, const json& params) {
    for (const auto& key : required_params(m, params))
        if (!params.contains(key) || params.at(key).is_null()) return false;
    return true;
}

bool is_modification(MarkerKind m) {
    switch (m) {
        case MarkerKind::LoadScaling:
        case MarkerKind::LoadAddition:
        case MarkerKind::SetpointAdjustment:
        case MarkerKind::TargetedLoadChange:
        case MarkerKind::TargetedGenChange:
        case MarkerKind::LineOutage:
            return true;
        default:
            return false;
    }
}

json LedgerEntry::to_json() const {
    return {{"turn", turn_index}, {"marker", intent::to_string(marker)}, {"params", params}};
}

LedgerEntry LedgerEntry::from_json(const json& j) {
    LedgerEntry e;
    e.turn_index = j.at("turn").get<int>();
    auto m = marker_from_string(j.at("marker").get<std::string>());
    if (!m) throw Error("MalformedLedger", "unknown marker " + j.at("marker").dump());
    e.marker = *m;
    e.params = j.value("params", json::object());
    return e;
}

std::optional<std::string> supersession_target(const LedgerEntry& e) {
    const json& p = e.params;
    switch (e.marker) {
        case MarkerKind::SetpointAdjustment:
            if (p.value("device", "") == "slack") return "Slack:v0";
            return "PV@" + p.at("bus").dump() + ":v0";
        case MarkerKind::TargetedLoadChange: return "PQ@" + p.at("bus").dump() + ":p0";
        case MarkerKind::TargetedGenChange: return "PV@" + p.at("bus").dump() + ":p0";
        case MarkerKind::LineOutage: {
            const int a = p.at("bus_pair").at(0).get<int>(), b = p.at("bus_pair").at(1).get<int>();
            return "Line@" + std::to_string(std::min(a, b)) + "-" + std::to_string(std::max(a, b)) + ":u";
        }
        default: return std::nullopt;
    }
}

void ModificationLedger::append(const LedgerEntry& e) {
    if (auto target = supersession_target(e)) {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (superseded.count(i)) continue;
            if (supersession_target(entries[i]) == target) superseded.insert(i);
        }
    }
    entries.push_back(e);
}

std::vector<LedgerEntry> ModificationLedger::active() const {
    std::vector<LedgerEntry> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (!superseded.count(i)) out.push_back(entries[i]);
    return out;
}

json ModificationLedger::to_json() const {
    json e = json::array();
    for (const auto& x : entries) e.push_back(x.to_json());
    return {{"entries", e}, {"superseded", json(std::vector<std::size_t>(superseded.begin(), superseded.end()))}};
}

ModificationLedger ModificationLedger::from_json(const json& j) {
    ModificationLedger l;
    for (const auto& x : j.value("entries", json::array())) l.entries.push_back(LedgerEntry::from_json(x));
    for (const auto& i : j.value("superseded", json::array())) l.superseded.insert(i.get<std::size_t>());
    return l;
}

json ParsedObjective::to_json() const {
    json m = json::array();
    for (const auto& x : markers) m.push_back(x.to_json());
    return {{"turn", turn_index},
            {"request_type", intent::to_string(request_type)},
            {"case_ref", case_ref ? case_ref->to_json() : json(nullptr)},
            {"markers", m},
            {"ledger", ledger.to_json()},
            {"coding_gate_triggered", coding_gate_triggered}};
}

}  // namespace pfagent::intent
