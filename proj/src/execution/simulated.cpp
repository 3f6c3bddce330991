#include "pfagent/execution/simulated.hpp"

#include <regex>

#include "pfagent/execution/gate.hpp"
#include "pfagent/intent/parser.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::execution {

using nlohmann::json;

knowledge::CaseInventory parse_rendered_inventory(const std::string& text) {
    knowledge::CaseInventory inv;
    inv.rendered = text;
    static const std::regex line_re(R"(^Line (\S+) bus1=(\d+) bus2=(\d+)$)");
    static const std::regex dev_re(R"(^(PQ|PV|Slack|Shunt) (\S+) bus=(\d+)$)");
    for (const auto& raw : util::split_lines(text)) {
        const std::string line = util::trim(raw);
        std::smatch m;
        if (line.rfind("case: ", 0) == 0) {
            inv.case_label = line.substr(6);
        } else if (line.rfind("Bus: ", 0) == 0) {
            for (const auto& b : util::split(line.substr(5), ' '))
                if (!b.empty()) inv.devices.push_back({"Bus", b, {std::stoi(b)}});
        } else if (std::regex_match(line, m, line_re)) {
            inv.devices.push_back({"Line", m[1].str(), {std::stoi(m[2].str()), std::stoi(m[3].str())}});
        } else if (std::regex_match(line, m, dev_re)) {
            inv.devices.push_back({m[1].str(), m[2].str(), {std::stoi(m[3].str())}});
        }
    }
    return inv;
}

SimulatedCoderProvider::SimulatedCoderProvider(intent::Vocabulary vocab, SimulatedCoderOptions options)
    : vocab_(std::move(vocab)), options_(options) {}

namespace {

std::optional<json> field(const std::string& block, const std::string& key) {
    for (const auto& line : util::split_lines(block)) {
        if (line.rfind(key + ": ", 0) != 0) continue;
        json j = json::parse(line.substr(key.size() + 2), nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        return j;
    }
    return std::nullopt;
}

std::string misuse_outages(const std::string& code) {
    static const std::regex alter_re(R"re(ss\.Line\.alter\("u", ("[^"]+"), 0\))re");
    return std::regex_replace(code, alter_re, "ss.Line.u.v[ss.Line.idx.v.index($1)] = 0");
}

}  // namespace

std::string SimulatedCoderProvider::complete(const std::vector<ChatMessage>& messages) {
    std::string system, user;
    for (const auto& m : messages) {
        if (m.role == "system") system = m.content;
        else if (m.role == "user" && user.empty()) user = m.content;
    }
    const auto continuity = knowledge::prompt_section(system, "CONTINUITY");
    const auto inventory_text = knowledge::prompt_section(system, "CASE_INVENTORY");
    if (!continuity || !inventory_text) throw ProviderError("prompt lacks the case inventory or continuity state");
    const std::string rules = knowledge::prompt_section(system, "RULES").value_or("");

    intent::ParsedObjective obj;
    obj.request_type = intent::RequestKind::RunnableCode;
    if (auto c = field(*continuity, "active_case"); c && c->is_object())
        obj.case_ref = intent::CaseReference::from_json(*c);
    if (auto t = field(*continuity, "turn"); t && t->is_number_integer()) obj.turn_index = t->get<int>();
    if (auto l = field(*continuity, "ledger"); l && l->is_object()) obj.ledger = intent::ModificationLedger::from_json(*l);
    if (!obj.case_ref) throw ProviderError("no active case in the continuity state");

    if (options_.drop_ledger_from_turn && obj.turn_index >= *options_.drop_ledger_from_turn) {
        intent::ModificationLedger kept;
        for (const auto& e : obj.ledger.active())
            if (e.turn_index == obj.turn_index) kept.append(e);
        obj.ledger = kept;
    }

    // Analysis requests come from the message itself; modifications were
    // already summarized in the ledger.
    for (auto& m : intent::extract_markers(user, vocab_))
        if (!intent::is_modification(m.marker) && intent::params_complete(m.marker, m.params))
            obj.markers.push_back(std::move(m));
    obj.coding_gate_triggered = true;

    const auto inventory = parse_rendered_inventory(*inventory_text);
    std::string code;
    try {
        code = template_gate(obj, inventory).code;
    } catch (const GateUnsupported& e) {
        return "I could not map this request onto the case: " + std::string(e.what());
    }
    if (options_.misuse_line_outage && rules.find("ss.Line.alter(\"u\"") == std::string::npos)
        code = misuse_outages(code);
    return "Here is the script.\n\n" + fence(code);
}

}  // namespace pfagent::execution
