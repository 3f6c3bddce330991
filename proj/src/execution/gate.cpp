#include "pfagent/execution/gate.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "pfagent/util/text.hpp"

namespace pfagent::execution {

using intent::MarkerKind;
using util::format_number;

namespace {

std::string quote(const std::string& s) { return nlohmann::json(s).dump(); }

std::string num(const nlohmann::json& v) { return format_number(v.get<double>()); }

// Python helpers appended to every gate script. They only read state, so the
// same text serves every objective.
constexpr const char* kHelpers = R"PY(

def _key(x):
    return math.floor(x * 1e8 + 0.5)


def _bus_table(ss):
    return [int(b) for b in ss.Bus.idx.v], [float(x) for x in ss.Bus.v.v]


def _extremes(buses, v):
    lo = min(range(len(v)), key=lambda i: (_key(v[i]), i))
    hi = min(range(len(v)), key=lambda i: (-_key(v[i]), i))
    return {"min_v": v[lo], "min_v_bus": buses[lo], "max_v": v[hi], "max_v_bus": buses[hi]}

)PY";

struct Resolver {
    const knowledge::CaseInventory& inv;
    // Loads added by earlier ledger entries, in order: (id, bus).
    std::vector<std::pair<std::string, int>> added;

    std::vector<std::string> loads_now() const {
        std::vector<std::string> ids;
        for (const auto* d : inv.of_kind("PQ")) ids.push_back(d->idx);
        for (const auto& [id, bus] : added) ids.push_back(id);
        return ids;
    }

    std::string load_at(int bus) const {
        for (const auto* d : inv.of_kind("PQ"))
            if (!d->buses.empty() && d->buses[0] == bus) return d->idx;
        for (const auto& [id, b] : added)
            if (b == bus) return id;
        throw GateUnsupported("no load at bus " + std::to_string(bus));
    }

    std::string device_at(const std::string& kind, int bus) const {
        for (const auto* d : inv.of_kind(kind))
            if (!d->buses.empty() && d->buses[0] == bus) return d->idx;
        throw GateUnsupported("no " + kind + " device at bus " + std::to_string(bus));
    }

    std::string slack() const {
        const auto s = inv.of_kind("Slack");
        if (s.empty()) throw GateUnsupported("case has no Slack device");
        return s.front()->idx;
    }

    std::string line_between(int a, int b) const {
        std::vector<std::string> hits;
        for (const auto* d : inv.of_kind("Line")) {
            if (d->buses.size() != 2) continue;
            if ((d->buses[0] == a && d->buses[1] == b) || (d->buses[0] == b && d->buses[1] == a))
                hits.push_back(d->idx);
        }
        if (hits.empty())
            throw GateUnsupported("no line between buses " + std::to_string(a) + " and " + std::to_string(b));
        if (hits.size() > 1)
            throw GateUnsupported("buses " + std::to_string(a) + " and " + std::to_string(b) +
                                  " are joined by parallel circuits " + util::join(hits, ", "));
        return hits.front();
    }

    void require_bus(int bus) const {
        if (!inv.has_bus(bus)) throw GateUnsupported("bus " + std::to_string(bus) + " is not in the case");
    }
};

void emit_modification(std::ostringstream& out, const intent::LedgerEntry& e, Resolver& r) {
    const auto& p = e.params;
    switch (e.marker) {
        case MarkerKind::LoadScaling: {
            const auto ids = r.loads_now();
            std::vector<std::string> quoted;
            for (const auto& id : ids) quoted.push_back(quote(id));
            const std::string f = num(p.at("factor"));
            out << "for pq in [" << util::join(quoted, ", ") << "]:\n"
                << "    ss.PQ.alter(\"p0\", pq, ss.PQ.get(\"p0\", pq) * " << f << ")\n"
                << "    ss.PQ.alter(\"q0\", pq, ss.PQ.get(\"q0\", pq) * " << f << ")\n";
            break;
        }
        case MarkerKind::LoadAddition:
            break;   // emitted before setup()
        case MarkerKind::SetpointAdjustment: {
            if (p.at("device") == "slack") {
                out << "ss.Slack.alter(\"v0\", " << quote(r.slack()) << ", " << num(p.at("v")) << ")\n";
            } else {
                const int bus = p.at("bus").get<int>();
                out << "ss.PV.alter(\"v0\", " << quote(r.device_at("PV", bus)) << ", " << num(p.at("v")) << ")\n";
            }
            break;
        }
        case MarkerKind::TargetedLoadChange: {
            const int bus = p.at("bus").get<int>();
            out << "ss.PQ.alter(\"p0\", " << quote(r.load_at(bus)) << ", " << num(p.at("p")) << ")\n";
            break;
        }
        case MarkerKind::TargetedGenChange: {
            const int bus = p.at("bus").get<int>();
            out << "ss.PV.alter(\"p0\", " << quote(r.device_at("PV", bus)) << ", " << num(p.at("p")) << ")\n";
            break;
        }
        case MarkerKind::LineOutage: {
            const auto& pair = p.at("bus_pair");
            const std::string id = r.line_between(pair.at(0).get<int>(), pair.at(1).get<int>());
            out << "ss.Line.alter(\"u\", " << quote(id) << ", 0)\n";
            break;
        }
        default:
            throw GateUnsupported("marker " + intent::to_string(e.marker) + " is not a modification");
    }
}

}  // namespace

std::string added_load_id(int turn, int k) { return "PQ_add_" + std::to_string(turn) + "_" + std::to_string(k); }

long long tie_key(double v) { return static_cast<long long>(std::floor(v * 1e8 + 0.5)); }

GeneratedScript template_gate(const intent::ParsedObjective& objective, const knowledge::CaseInventory& inventory) {
    if (!objective.coding_gate_triggered) throw GateUnsupported("objective is not fully parameterized");
    if (!objective.case_ref) throw GateUnsupported("no case selected");
    const auto& ref = *objective.case_ref;

    // Analysis markers of this turn. Later duplicates replace earlier ones.
    bool voltage_check = false, plot = false;
    std::optional<double> v_threshold, a_threshold;
    std::optional<std::vector<std::string>> candidates;
    for (const auto& m : objective.markers) {
        switch (m.marker) {
            case MarkerKind::VoltageCheck: voltage_check = true; break;
            case MarkerKind::PlotRequest:
                if (m.params.value("kind", "") != "voltage_profile")
                    throw GateUnsupported("only voltage-profile plots are templated");
                plot = true;
                break;
            case MarkerKind::Ranking:
                if (m.params.at("kind") == "voltage") v_threshold = m.params.at("threshold").get<double>();
                else if (m.params.at("kind") == "angle") a_threshold = m.params.at("threshold").get<double>();
                else throw GateUnsupported("unknown ranking kind " + m.params.at("kind").dump());
                break;
            case MarkerKind::NMinus1:
                candidates = m.params.at("candidates").get<std::vector<std::string>>();
                break;
            default: break;
        }
    }
    if (candidates) {
        for (const auto& c : *candidates)
            if (!inventory.has("Line", c)) throw GateUnsupported("candidate " + c + " is not a line of the case");
    }

    std::ostringstream out;
    out << "import json\nimport math\n\nimport pfsim\n\n";
    if (ref.source == intent::CaseSource::BuiltIn)
        out << "ss = pfsim.load(pfsim.get_case(" << quote(ref.identifier) << "), setup=False)\n";
    else
        out << "ss = pfsim.load(" << quote(ref.identifier) << ", setup=False)\n";

    const auto active = objective.ledger.active();
    Resolver resolver{inventory, {}};
    // Additions first: devices can only be added before setup().
    std::map<int, int> per_turn;
    std::vector<std::string> ids_for_entry(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
        const auto& e = active[i];
        if (e.marker != MarkerKind::LoadAddition) continue;
        const int bus = e.params.at("bus").get<int>();
        resolver.require_bus(bus);
        ids_for_entry[i] = added_load_id(e.turn_index, ++per_turn[e.turn_index]);
        const double q = e.params.contains("q") && !e.params["q"].is_null() ? e.params["q"].get<double>() : 0.0;
        out << "ss.add(\"PQ\", {\"idx\": " << quote(ids_for_entry[i]) << ", \"bus\": " << bus
            << ", \"p0\": " << num(e.params.at("p")) << ", \"q0\": " << format_number(q) << "})\n";
    }
    out << "ss.setup()\n";
    for (std::size_t i = 0; i < active.size(); ++i) {
        const auto& e = active[i];
        if (e.marker == MarkerKind::LoadAddition) {
            resolver.added.emplace_back(ids_for_entry[i], e.params.at("bus").get<int>());
            continue;
        }
        emit_modification(out, e, resolver);
    }
    out << kHelpers;

    out << "converged = bool(ss.PFlow.run())\n"
        << "result = {\"case\": " << quote(ref.identifier) << ", \"converged\": converged, "
        << "\"islanded\": bool(ss.PFlow.islanded)}\n"
        << "result[\"total_load_p\"] = sum(float(d[\"p0\"]) for d in ss.PQ.as_dicts() if d[\"u\"] != 0)\n"
        << "if converged:\n"
        << "    buses, v = _bus_table(ss)\n"
        << "    p, q = pfsim.gen_power(ss, \"Slack\", " << quote(resolver.slack()) << ")\n"
        << "    result[\"slack_p\"] = p\n"
        << "    result[\"slack_q\"] = q\n"
        << "    result.update(_extremes(buses, v))\n"
        << "    result[\"voltages\"] = {str(b): x for b, x in zip(buses, v)}\n";
    if (voltage_check) {
        out << "    violations = [{\"bus\": b, \"v\": x} for b, x in zip(buses, v) if x < 0.95 or x > 1.05]\n"
            << "    result[\"n_violations\"] = len(violations)\n"
            << "    result[\"violations\"] = violations\n";
    }
    if (v_threshold) {
        out << "    below = [i for i in range(len(v)) if v[i] < " << format_number(*v_threshold) << "]\n"
            << "    below.sort(key=lambda i: (_key(v[i]), i))\n"
            << "    result[\"ranking\"] = [{\"bus\": buses[i], \"v\": v[i], \"rank\": r + 1} for r, i in enumerate(below)]\n"
            << "    result[\"n_below\"] = len(below)\n";
    }
    if (a_threshold) {
        out << "    pos = {b: i for i, b in enumerate(buses)}\n"
            << "    ang = [float(x) for x in ss.Bus.a.v]\n"
            << "    rows = []\n"
            << "    for k, d in enumerate(ss.Line.as_dicts()):\n"
            << "        if d[\"u\"] == 0:\n"
            << "            continue\n"
            << "        diff = abs(ang[pos[int(d[\"bus1\"])]] - ang[pos[int(d[\"bus2\"])]]) * 180.0 / math.pi\n"
            << "        if diff > " << format_number(*a_threshold) << ":\n"
            << "            rows.append((k, d[\"idx\"], diff))\n"
            << "    rows.sort(key=lambda t: (-_key(t[2]), t[0]))\n"
            << "    result[\"line_ranking\"] = [{\"line\": n, \"angle_diff\": x, \"rank\": r + 1} for r, (k, n, x) in enumerate(rows)]\n"
            << "    result[\"n_above\"] = len(rows)\n";
    }
    if (plot) {
        out << "    import matplotlib.pyplot as plt\n"
            << "    fig, ax = plt.subplots(figsize=(8, 4))\n"
            << "    ax.plot(range(len(v)), v, marker=\"o\")\n"
            << "    ax.set_xticks(range(len(v)))\n"
            << "    ax.set_xticklabels([str(b) for b in buses], fontsize=7)\n"
            << "    ax.axhline(0.95, color=\"r\", linestyle=\"--\")\n"
            << "    ax.axhline(1.05, color=\"r\", linestyle=\"--\")\n"
            << "    ax.set_xlabel(\"Bus\")\n"
            << "    ax.set_ylabel(\"Voltage (pu)\")\n"
            << "    fig.tight_layout()\n"
            << "    fig.savefig(\"voltage_profile.png\")\n"
            << "    plt.close(fig)\n"
            << "    result[\"plot_file\"] = \"voltage_profile.png\"\n";
    }
    if (candidates) {
        std::vector<std::string> quoted;
        for (const auto& c : *candidates) quoted.push_back(quote(c));
        out << "contingencies = {}\n"
            << "for line in [" << util::join(quoted, ", ") << "]:\n"
            << "    u0 = ss.Line.get(\"u\", line)\n"
            << "    ss.Line.alter(\"u\", line, 0)\n"
            << "    ok = bool(ss.PFlow.run())\n"
            << "    entry = {\"converged\": ok, \"islanded\": bool(ss.PFlow.islanded)}\n"
            << "    if ok:\n"
            << "        entry.update({k: x for k, x in _extremes(*_bus_table(ss)).items() if k.startswith(\"min\")})\n"
            << "    contingencies[line] = entry\n"
            << "    ss.Line.alter(\"u\", line, u0)\n"
            << "result[\"contingencies\"] = contingencies\n"
            << "result[\"n_nonconverged\"] = sum(1 for e in contingencies.values() if not e[\"converged\"])\n"
            << "ok_lines = [n for n in contingencies if contingencies[n][\"converged\"]]\n"
            << "worst = min(ok_lines, key=lambda n: _key(contingencies[n][\"min_v\"]), default=None)\n"
            << "result[\"worst_contingency\"] = worst\n"
            << "result[\"worst_min_v\"] = contingencies[worst][\"min_v\"] if worst is not None else None\n";
    }
    out << "print(\"RESULT_JSON: \" + json.dumps(result))\n";

    GeneratedScript s;
    s.code = out.str();
    s.raw_response = fence(s.code);
    s.raw_fenced_blocks = 1;
    s.fenced_block_count = 1;
    s.provenance = Provenance::Template;
    s.attempt_index = 1;
    return s;
}

}  // namespace pfagent::execution
