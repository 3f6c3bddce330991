#include "pfagent/knowledge/context.hpp"

#include <algorithm>
#include <set>

#include "pfagent/util/backend.hpp"
#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::knowledge {

using intent::MarkerKind;

namespace {

const std::vector<std::string> kSections = {"RULES", "MANUAL", "EXAMPLES", "CASE_INVENTORY", "CONTINUITY", "COMPACTION"};

const char* kPreamble =
    "You write Python study scripts for the pfsim power-flow package.\n"
    "Reply with exactly one fenced python code block.\n"
    "Load the case named in the continuity state, apply every ledger modification in order, "
    "run ss.PFlow.run(), and print the result as the final line: RESULT_JSON: <single-line JSON object>.\n";

std::string tag_for(const intent::LedgerEntry& e) {
    switch (e.marker) {
        case MarkerKind::VoltageCheck: return "voltage_check";
        case MarkerKind::LoadScaling: return "load_scaling";
        case MarkerKind::LoadAddition: return "load_addition";
        case MarkerKind::SetpointAdjustment:
            return e.params.value("device", "") == "pv" ? "pv_setpoint" : "slack_setpoint";
        case MarkerKind::TargetedLoadChange: return "targeted_load";
        case MarkerKind::TargetedGenChange: return "targeted_gen";
        case MarkerKind::LineOutage: return "line_outage";
        case MarkerKind::NMinus1: return "n_minus_1";
        case MarkerKind::Ranking: return e.params.value("kind", "") == "angle" ? "angle_ranking" : "voltage_ranking";
        case MarkerKind::PlotRequest: return "voltage_plot";
    }
    return "power_flow";
}

std::string describe_entry(const intent::LedgerEntry& e) {
    std::vector<std::string> kv;
    for (const auto& [k, v] : e.params.items()) kv.push_back(k + "=" + v.dump());
    return "turn " + std::to_string(e.turn_index) + " " + intent::to_string(e.marker) + " " + util::join(kv, " ");
}

}  // namespace

std::vector<CodeExample> load_code_examples(const std::filesystem::path& path) {
    const json doc = json::parse(util::read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) throw Error("InvalidExamples", path.string() + " is not a JSON list");
    std::vector<CodeExample> out;
    for (const auto& r : doc)
        out.push_back({r.at("title").get<std::string>(), r.at("task_tags").get<std::vector<std::string>>(),
                       r.at("code").get<std::string>()});
    return out;
}

std::vector<std::string> objective_tags(const intent::ParsedObjective& objective) {
    std::vector<std::string> tags{"power_flow"};
    auto add = [&](const std::string& t) {
        if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
    };
    for (const auto& m : objective.markers) add(tag_for({objective.turn_index, m.marker, m.params}));
    for (const auto& e : objective.ledger.active()) add(tag_for(e));
    if (objective.case_ref && objective.case_ref->source == intent::CaseSource::Uploaded) add("uploaded");
    return tags;
}

std::vector<CodeExample> select_examples(const std::vector<CodeExample>& examples,
                                         const intent::ParsedObjective& objective, std::size_t n) {
    const auto tags = objective_tags(objective);
    std::vector<std::pair<int, std::size_t>> scored;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        int overlap = 0;
        // the generic tag only breaks ties between otherwise unrelated examples
        for (const auto& t : examples[i].task_tags)
            if (std::find(tags.begin(), tags.end(), t) != tags.end()) overlap += t == "power_flow" ? 1 : 2;
        if (overlap > 0) scored.emplace_back(overlap, i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<CodeExample> out;
    for (std::size_t i = 0; i < scored.size() && i < n; ++i) out.push_back(examples[scored[i].second]);
    return out;
}

bool CaseInventory::has(const std::string& kind, const std::string& idx) const {
    return std::any_of(devices.begin(), devices.end(),
                       [&](const InventoryDevice& d) { return d.kind == kind && d.idx == idx; });
}

bool CaseInventory::has_device_id(const std::string& idx) const {
    return std::any_of(devices.begin(), devices.end(),
                       [&](const InventoryDevice& d) { return d.kind != "Bus" && d.idx == idx; });
}

bool CaseInventory::has_bus(int bus) const { return has("Bus", std::to_string(bus)); }

std::vector<const InventoryDevice*> CaseInventory::of_kind(const std::string& kind) const {
    std::vector<const InventoryDevice*> out;
    for (const auto& d : devices)
        if (d.kind == kind) out.push_back(&d);
    return out;
}

json CaseInventory::to_json() const {
    json devs = json::array();
    for (const auto& d : devices) devs.push_back({{"kind", d.kind}, {"idx", d.idx}, {"buses", d.buses}});
    return {{"case", case_label}, {"devices", devs}};
}

CaseInventory CaseInventory::from_backend_json(const json& doc, const std::string& case_label) {
    CaseInventory inv;
    inv.case_label = case_label;
    std::vector<std::string> bus_ids;
    for (const auto& b : doc.at("Bus")) {
        const int id = b.get<int>();
        inv.devices.push_back({"Bus", std::to_string(id), {id}});
        bus_ids.push_back(std::to_string(id));
    }
    std::string rendered = "case: " + case_label + "\n";
    rendered += "Bus: " + util::join(bus_ids, " ") + "\n";
    for (const auto& l : doc.value("Line", json::array())) {
        const auto idx = l.at(0).get<std::string>();
        const int b1 = l.at(1).get<int>(), b2 = l.at(2).get<int>();
        inv.devices.push_back({"Line", idx, {b1, b2}});
        rendered += "Line " + idx + " bus1=" + std::to_string(b1) + " bus2=" + std::to_string(b2) + "\n";
    }
    for (const char* kind : {"PQ", "PV", "Slack", "Shunt"}) {
        for (const auto& r : doc.value(kind, json::array())) {
            const auto idx = r.at(0).get<std::string>();
            const int bus = r.at(1).get<int>();
            inv.devices.push_back({kind, idx, {bus}});
            rendered += std::string(kind) + " " + idx + " bus=" + std::to_string(bus) + "\n";
        }
    }
    inv.rendered = rendered;
    return inv;
}

CaseInventory build_case_inventory(const intent::CaseReference& ref, const std::filesystem::path& workspace) {
    const std::string loader = ref.source == intent::CaseSource::BuiltIn
                                   ? "pfsim.get_case(" + json(ref.identifier).dump() + ")"
                                   : json(ref.identifier).dump();
    const std::string code = "import json\nimport pfsim\nss = pfsim.load(" + loader +
                             ")\nprint(json.dumps(ss.inventory()))\n";
    util::ProcessLimits limits;
    limits.wall_time = std::chrono::seconds(60);
    const auto res = util::run_backend_python(code, workspace, limits);
    if (res.exit_code != 0 || res.timed_out) {
        const std::string detail = util::trim(util::tail_lines(res.stderr_text, 3));
        throw Error("CaseLoadFailure", "cannot load case '" + ref.identifier + "': " +
                                           (detail.empty() ? "backend exited abnormally" : detail));
    }
    const auto lines = util::split_lines(res.stdout_text);
    const json doc = lines.empty() ? json() : json::parse(lines.back(), nullptr, false);
    if (!doc.is_object()) throw Error("CaseLoadFailure", "backend returned no inventory for '" + ref.identifier + "'");
    return CaseInventory::from_backend_json(doc, ref.identifier + " (" + intent::to_string(ref.source) + ")");
}

std::string compaction_summary(const intent::ModificationLedger& ledger, const std::vector<std::string>& history) {
    std::string out;
    const auto active = ledger.active();
    if (active.empty()) {
        out += "modifications in effect: none\n";
    } else {
        out += "modifications in effect:\n";
        for (const auto& e : active) out += "- " + describe_entry(e) + "\n";
    }
    for (std::size_t i = 0; i < history.size(); ++i)
        out += "turn " + std::to_string(i + 1) + ": " + history[i] + "\n";
    return out;
}

std::string continuity_block(const intent::ParsedObjective& objective) {
    return "active_case: " + (objective.case_ref ? objective.case_ref->to_json().dump() : std::string("null")) +
           "\nturn: " + std::to_string(objective.turn_index) + "\nledger: " + objective.ledger.to_json().dump() + "\n";
}

PromptContext assemble_prompt(const intent::ParsedObjective& objective, const std::string& user_message,
                              const SimilarityIndex* index, const std::vector<CodeExample>& examples,
                              const CaseInventory& inventory, const AdaptiveRuleSet& rules,
                              const std::vector<std::string>& history, const PromptOptions& options) {
    PromptContext ctx;
    ctx.objective = objective;
    ctx.user_message = user_message;
    ctx.inventory = inventory;
    ctx.continuity_state = continuity_block(objective);

    // dedupe guidance, keep first occurrence order
    std::set<std::string> seen;
    for (const auto& g : rules.guidance)
        if (seen.insert(g).second) ctx.rules.guidance.push_back(g);
    ctx.rules.source_packs = rules.source_packs;

    if (options.include_retrieval) {
        if (index) {
            std::string query = user_message;
            for (const auto& t : objective_tags(objective)) query += " " + util::replace_all(t, "_", " ");
            ctx.retrieved_windows = index->retrieve(query, options.top_k);
        }
        ctx.examples = select_examples(examples, objective);
    }
    std::string compaction = compaction_summary(objective.ledger, history);

    const std::string mandatory = std::string(kPreamble) + "<<CASE_INVENTORY>>\n" + inventory.rendered +
                                  "<<CONTINUITY>>\n" + ctx.continuity_state;
    if (mandatory.size() > options.budget_chars)
        throw Error("BudgetExhausted", "case inventory and continuity state need " +
                                           std::to_string(mandatory.size()) + " characters, budget is " +
                                           std::to_string(options.budget_chars));

    auto render = [&](std::size_t n_windows, std::size_t n_examples, const std::string& comp,
                      const std::vector<std::string>& guidance) {
        std::string p = kPreamble;
        if (!guidance.empty()) {
            p += "<<RULES>>\n";
            for (const auto& g : guidance) p += "- " + g + "\n";
        }
        if (n_windows > 0) {
            p += "<<MANUAL>>\n";
            for (std::size_t i = 0; i < n_windows; ++i) {
                const auto& w = ctx.retrieved_windows[i].window;
                p += "[manual pages " + std::to_string(w.start_page) + "-" + std::to_string(w.end_page) + ", " +
                     w.window_id + "]\n" + w.text;
                if (!w.text.empty() && w.text.back() != '\n') p += "\n";
            }
        }
        if (n_examples > 0) {
            p += "<<EXAMPLES>>\n";
            for (std::size_t i = 0; i < n_examples; ++i)
                p += "# " + ctx.examples[i].title + "\n```python\n" + ctx.examples[i].code + "```\n";
        }
        p += "<<CASE_INVENTORY>>\n" + inventory.rendered;
        p += "<<CONTINUITY>>\n" + ctx.continuity_state;
        p += "<<COMPACTION>>\n" + comp;
        return p;
    };

    std::size_t nw = ctx.retrieved_windows.size(), ne = ctx.examples.size();
    std::vector<std::string> guidance = ctx.rules.guidance;
    std::string prompt = render(nw, ne, compaction, guidance);
    while (prompt.size() > options.budget_chars) {
        const std::size_t over = prompt.size() - options.budget_chars;
        if (nw > 0) {
            --nw;
            ctx.truncation_log.push_back("dropped manual window " + ctx.retrieved_windows[nw].window.window_id +
                                         " (rank " + std::to_string(nw + 1) + ")");
        } else if (ne > 0) {
            --ne;
            ctx.truncation_log.push_back("dropped code example '" + ctx.examples[ne].title + "'");
        } else if (!compaction.empty()) {
            compaction.resize(compaction.size() > over ? compaction.size() - over : 0);
            ctx.truncation_log.push_back("truncated compaction summary");
        } else if (!guidance.empty()) {
            guidance.pop_back();
            ctx.truncation_log.push_back("dropped a guidance rule");
        } else {
            throw Error("BudgetExhausted", "prompt cannot fit in " + std::to_string(options.budget_chars));
        }
        prompt = render(nw, ne, compaction, guidance);
    }
    ctx.retrieved_windows.resize(nw);
    ctx.examples.resize(ne);
    ctx.compaction = compaction;
    ctx.rules.guidance = guidance;
    ctx.system_prompt = prompt;
    return ctx;
}

std::optional<std::string> prompt_section(const std::string& prompt, const std::string& name) {
    const std::string open = "<<" + name + ">>\n";
    std::size_t start = prompt.rfind(open, 0) == 0 ? 0 : prompt.find("\n" + open);
    if (start == std::string::npos) return std::nullopt;
    start = prompt.find(open, start) + open.size();
    std::size_t end = prompt.size();
    for (const auto& s : kSections) {
        const auto pos = prompt.find("\n<<" + s + ">>\n", start > 0 ? start - 1 : 0);
        if (pos != std::string::npos && pos + 1 >= start && pos + 1 < end) end = pos + 1;
    }
    return prompt.substr(start, end - start);
}

}  // namespace pfagent::knowledge
