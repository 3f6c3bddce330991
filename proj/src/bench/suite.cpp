#include "pfagent/bench/suite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "pfagent/bench/oracle.hpp"
#include "pfagent/grid/power_flow.hpp"
#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::bench {

using intent::CaseFamily;
using intent::CaseSource;
using util::format_number;

namespace {

constexpr std::array<std::pair<TaskType, const char*>, 13> kTaskNames{{
    {TaskType::VoltageCheck, "voltage_check"},
    {TaskType::LoadAddition, "load_addition"},
    {TaskType::LoadScaling, "load_scaling"},
    {TaskType::SlackSetpoint, "slack_setpoint"},
    {TaskType::PvSetpoint, "pv_setpoint"},
    {TaskType::TargetedLoad, "targeted_load"},
    {TaskType::TargetedGen, "targeted_gen"},
    {TaskType::LineOutage, "line_outage"},
    {TaskType::IslandingOutage, "islanding_outage"},
    {TaskType::NMinus1, "n_minus_1"},
    {TaskType::VoltageRanking, "voltage_ranking"},
    {TaskType::AngleRanking, "angle_ranking"},
    {TaskType::VoltagePlot, "voltage_plot"},
}};

constexpr const char* kPlotFile = "voltage_profile.png";

// Regex text for a number as the scripts print it, not followed by more digits.
std::string num_re(double v) { return util::regex_escape(format_number(v)) + "(?!\\d)"; }

std::string quoted_re(const std::string& s) { return "[\"']" + util::regex_escape(s) + "[\"']"; }

WeightedCheck required(double w, std::string pattern, std::string label) {
    return {w, std::move(pattern), false, std::move(label)};
}

WeightedCheck forbidden(double w, std::string pattern, std::string label) {
    return {w, std::move(pattern), true, std::move(label)};
}

std::string loader_re(const ScenarioSpec& s) {
    if (s.source == CaseSource::Uploaded) return "pfsim\\.load\\(\\s*" + quoted_re(s.case_identifier());
    return "pfsim\\.load\\(\\s*pfsim\\.get_case\\(\\s*" + quoted_re(s.case_id) + "\\s*\\)";
}

std::string wrong_loader_re(const ScenarioSpec& s) {
    if (s.source == CaseSource::Uploaded) return "get_case\\(";
    return "pfsim\\.load\\(\\s*[\"'][^\"']*\\.json[\"']";
}

std::string task_api_re(TaskType t) {
    switch (t) {
        case TaskType::VoltageCheck:
        case TaskType::VoltageRanking: return "\\.Bus\\.v\\.v\\b";
        case TaskType::AngleRanking: return "\\.Bus\\.a\\.v\\b";
        case TaskType::VoltagePlot: return "\\.savefig\\(";
        case TaskType::LoadAddition: return "\\.add\\(\\s*[\"']PQ[\"']";
        case TaskType::LoadScaling:
        case TaskType::TargetedLoad: return "\\.PQ\\.alter\\(\\s*[\"']p0[\"']";
        case TaskType::SlackSetpoint: return "\\.Slack\\.alter\\(\\s*[\"']v0[\"']";
        case TaskType::PvSetpoint: return "\\.PV\\.alter\\(\\s*[\"']v0[\"']";
        case TaskType::TargetedGen: return "\\.PV\\.alter\\(\\s*[\"']p0[\"']";
        case TaskType::LineOutage:
        case TaskType::IslandingOutage:
        case TaskType::NMinus1: return "\\.Line\\.alter\\(\\s*[\"']u[\"']";
    }
    return "$^";
}

std::vector<WeightedCheck> grounding_checks(const ScenarioSpec& s, TaskType t) {
    return {
        required(2, loader_re(s), "case loader"),
        required(1, "\\.PFlow\\.run\\(\\s*\\)", "power flow call"),
        required(1, "RESULT_JSON", "structured result line"),
        required(2, task_api_re(t), "task api: " + to_string(t)),
        forbidden(2, wrong_loader_re(s), "wrong case loader"),
        forbidden(2, "\\.(u|p0|q0|v0)\\.v\\[[^\\]]*\\]\\s*=", "positional parameter write"),
    };
}

std::string carried_re(const intent::LedgerEntry& e, const ScenarioSpec& s) {
    const json& p = e.params;
    switch (e.marker) {
        case intent::MarkerKind::LoadScaling:
            // one match per scaling: the active-power line, not its q0 twin
            return "p0[^\\n]*\\*\\s*" + num_re(p.at("factor").get<double>());
        case intent::MarkerKind::LoadAddition:
            return "\\.add\\(\\s*[\"']PQ[\"'][^\\n]*[\"']bus[\"']\\s*:\\s*" + std::to_string(p.at("bus").get<int>()) +
                   "(?!\\d)";
        case intent::MarkerKind::SetpointAdjustment:
            return std::string(p.at("device") == "slack" ? "\\.Slack" : "\\.PV") +
                   "\\.alter\\(\\s*[\"']v0[\"'][^)\\n]*[^\\d.]" + num_re(p.at("v").get<double>());
        case intent::MarkerKind::TargetedLoadChange:
            return "\\.PQ\\.alter\\(\\s*[\"']p0[\"'][^)\\n]*[^\\d.]" + num_re(p.at("p").get<double>());
        case intent::MarkerKind::TargetedGenChange:
            return "\\.PV\\.alter\\(\\s*[\"']p0[\"'][^)\\n]*[^\\d.]" + num_re(p.at("p").get<double>());
        case intent::MarkerKind::LineOutage: {
            // the line id is resolved from the turn that introduced it
            const auto& t = s.turns.at(e.turn_index - 1);
            return quoted_re(t.op.params.at("line").get<std::string>());
        }
        default: return "$^";
    }
}

std::vector<WeightedCheck> continuity_checks(const ScenarioSpec& s, int turn_index) {
    std::vector<WeightedCheck> out{required(1, loader_re(s), "case loader")};
    intent::ModificationLedger ledger;
    for (int t = 1; t <= turn_index; ++t)
        if (const auto e = ledger_entry(s.turns[t - 1].op, t)) ledger.append(*e);
    // Identical patterns (the same scaling twice, two additions at one bus)
    // must each appear once, and the current turn's own edit does not count
    // as carrying an earlier one.
    std::map<std::string, int> needed;
    for (const auto& e : ledger.active())
        if (e.turn_index < turn_index) ++needed[carried_re(e, s)];
    std::optional<std::string> own;
    if (const auto e = ledger_entry(s.turns[turn_index - 1].op, turn_index)) own = carried_re(*e, s);
    for (const auto& e : ledger.active()) {
        if (e.turn_index >= turn_index) continue;
        auto c = required(1, carried_re(e, s), "turn " + std::to_string(e.turn_index) + " " + intent::to_string(e.marker));
        c.min_count = needed.at(c.pattern) + (own == c.pattern ? 1 : 0);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<std::string> semantic_keys(const ScenarioSpec& s, int turn_index, const json& oracle) {
    const TurnOp& op = s.turns[turn_index - 1].op;
    const auto slack_bus = [&] {
        const auto base = scenario_base_case(s);
        return std::to_string(base.slacks.front().bus);
    };
    switch (op.task) {
        case TaskType::VoltageCheck:
            return {"converged", "slack_p", "min_v", "min_v_bus", "max_v", "max_v_bus", "n_violations"};
        case TaskType::LoadAddition:
        case TaskType::TargetedLoad:
            return {"converged", "slack_p", "total_load_p", "voltages." + std::to_string(op.params.at("bus").get<int>())};
        case TaskType::LoadScaling: return {"converged", "slack_p", "total_load_p", "min_v", "min_v_bus"};
        case TaskType::SlackSetpoint: return {"converged", "slack_p", "slack_q", "voltages." + slack_bus()};
        case TaskType::PvSetpoint:
            return {"converged", "slack_q", "voltages." + std::to_string(op.params.at("bus").get<int>()), "min_v"};
        case TaskType::TargetedGen: return {"converged", "slack_p", "min_v"};
        case TaskType::LineOutage:
        case TaskType::IslandingOutage:
            if (!oracle.value("converged", false)) return {"converged", "islanded"};
            return {"converged", "islanded", "slack_p", "min_v", "min_v_bus"};
        case TaskType::NMinus1: {
            std::vector<std::string> keys{"n_nonconverged", "worst_contingency", "worst_min_v"};
            for (const auto& c : op.params.at("candidates"))
                keys.push_back("contingencies." + c.get<std::string>() + ".converged");
            return keys;
        }
        case TaskType::VoltageRanking: {
            std::vector<std::string> keys{"converged", "n_below"};
            const std::size_t n = std::min<std::size_t>(3, oracle.at("ranking").size());
            for (std::size_t i = 0; i < n; ++i)
                for (const char* f : {"bus", "v", "rank"}) keys.push_back("ranking." + std::to_string(i) + "." + f);
            return keys;
        }
        case TaskType::AngleRanking: {
            std::vector<std::string> keys{"converged", "n_above"};
            const std::size_t n = std::min<std::size_t>(3, oracle.at("line_ranking").size());
            for (std::size_t i = 0; i < n; ++i)
                for (const char* f : {"line", "angle_diff", "rank"})
                    keys.push_back("line_ranking." + std::to_string(i) + "." + f);
            return keys;
        }
        case TaskType::VoltagePlot: return {"converged", "min_v", "plot_file"};
    }
    return {"converged"};
}

// ---------------------------------------------------------------------------
// Phrasing

std::string case_phrase(const std::string& case_id, std::uint64_t pick) {
    static const std::map<std::string, std::vector<std::string>> names{
        {"ieee14", {"the IEEE 14 bus system", "the IEEE 14-bus case"}},
        {"ieee39", {"the IEEE 39 bus system", "the New England 39 bus case"}},
        {"kundur", {"the Kundur two area system", "the Kundur test case"}},
        {"pjm5", {"the PJM 5 bus system", "the 5 bus PJM case"}},
    };
    const auto& v = names.at(case_id);
    return v[pick % v.size()];
}

struct Phrased {
    std::string text;
    int variant = 0;
};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    std::uint64_t next() { return gen_(); }
    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(gen_() % n); }
    template <class T>
    const T& pick(const std::vector<T>& v) { return v.at(below(v.size())); }

private:
    std::mt19937_64 gen_;
};

int round5(double x) { return std::max(5, static_cast<int>(std::lround(x / 5.0)) * 5); }

struct Draft {
    TurnOp op;
    std::string text;
    int variant = 0;
};

std::vector<std::size_t> outage_candidates(const grid::CaseData& d, bool want_island) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < d.lines.size(); ++i) {
        const auto& l = d.lines[i];
        if (l.u == 0.0 || d.lines_between(l.bus1, l.bus2).size() != 1) continue;
        grid::CaseData trial = d;
        trial.lines[i].u = 0.0;
        if (grid::network_connected(trial) != want_island) out.push_back(i);
    }
    return out;
}

std::vector<int> pv_buses(const grid::CaseData& d) {
    std::vector<int> out;
    for (const auto& g : d.pvs) out.push_back(g.bus);
    return out;
}

std::vector<int> original_load_buses(const grid::CaseData& base) {
    std::vector<int> out;
    for (const auto& l : base.loads)
        if (std::find(out.begin(), out.end(), l.bus) == out.end()) out.push_back(l.bus);
    return out;
}

// Draw one op for `task` against the solved state reached so far. Returns
// nothing when the state offers no valid choice.
std::optional<Draft> draw(TaskType task, const OracleState& st, const grid::CaseData& base, bool corridor, Rng& rng) {
    const auto& d = st.data;
    Draft out;
    out.op.task = task;
    json& p = out.op.params;
    switch (task) {
        case TaskType::VoltageCheck: {
            static const std::vector<std::string> v{"Check the bus voltages again and report any violations.",
                                                    "Report the bus voltages for the modified case.",
                                                    "Run the power flow again and check the voltage limits."};
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = v[out.variant];
            break;
        }
        case TaskType::LoadScaling: {
            out.variant = static_cast<int>(rng.below(3));
            if (out.variant == 1) {
                const int pct = rng.pick(std::vector<int>{5, 10, 15, 20});
                p["factor"] = 1.0 + pct / 100.0;
                out.text = "Increase all loads by " + std::to_string(pct) + "% and rerun the power flow.";
            } else {
                const double f = rng.pick(std::vector<double>{0.9, 1.05, 1.1, 1.15, 1.2});
                p["factor"] = f;
                out.text = out.variant == 0 ? "Scale all loads by " + format_number(f) + " and rerun the power flow."
                                            : "Multiply the system load by " + format_number(f) +
                                                  " and solve the power flow again.";
            }
            break;
        }
        case TaskType::LoadAddition: {
            const int bus = d.buses[rng.below(d.buses.size())].idx;
            const int pmw = 10 + 5 * static_cast<int>(rng.below(11));
            out.variant = static_cast<int>(rng.below(3));
            p["bus"] = bus;
            p["p"] = pmw / 100.0;
            p["q"] = 0.0;
            if (out.variant == 0) {
                out.text = "Add a load of " + std::to_string(pmw) + " MW at bus " + std::to_string(bus) +
                           " and rerun the power flow.";
            } else if (out.variant == 1) {
                out.text = "Connect a new " + std::to_string(pmw) + " MW load at bus " + std::to_string(bus) +
                           " and solve the power flow again.";
            } else {
                const int qmv = 5 * (1 + static_cast<int>(rng.below(4)));
                p["q"] = qmv / 100.0;
                out.text = "Add a load of " + std::to_string(pmw) + " MW and " + std::to_string(qmv) + " MVAr at bus " +
                           std::to_string(bus) + " and rerun the power flow.";
            }
            break;
        }
        case TaskType::SlackSetpoint: {
            const int k = 100 + static_cast<int>(rng.below(7));
            p["v"] = k / 100.0;
            out.variant = static_cast<int>(rng.below(2));
            out.text = out.variant == 0
                           ? "Set the slack bus voltage to " + format_number(k / 100.0) + " pu and rerun the power flow."
                           : "Change the voltage setpoint of the slack bus to " + format_number(k / 100.0) +
                                 " pu, then solve the power flow again.";
            break;
        }
        case TaskType::PvSetpoint: {
            const auto buses = pv_buses(d);
            if (buses.empty()) return std::nullopt;
            const int bus = rng.pick(buses);
            const int k = 98 + static_cast<int>(rng.below(9));
            p["bus"] = bus;
            p["v"] = k / 100.0;
            out.variant = static_cast<int>(rng.below(2));
            out.text = out.variant == 0
                           ? "Set the generator voltage at bus " + std::to_string(bus) + " to " + format_number(k / 100.0) +
                                 " pu and rerun the power flow."
                           : "Change the voltage setpoint of the PV at bus " + std::to_string(bus) + " to " +
                                 format_number(k / 100.0) + " pu, then solve the power flow again.";
            break;
        }
        case TaskType::TargetedLoad: {
            const auto buses = original_load_buses(base);
            if (buses.empty()) return std::nullopt;
            const int bus = rng.pick(buses);
            double now = 0.0;
            for (const auto& l : d.loads)
                if (l.bus == bus) {
                    now = l.p0;
                    break;
                }
            const double m = rng.pick(std::vector<double>{0.5, 0.75, 1.25, 1.5});
            const int pmw = round5(now * 100.0 * m);
            p["bus"] = bus;
            p["p"] = pmw / 100.0;
            static const std::vector<std::string> v{"Set the load at bus {b} to {p} MW and rerun the power flow.",
                                                    "Change the demand at bus {b} to {p} MW, then solve again.",
                                                    "Change bus {b} load to {p} MW and rerun the power flow."};
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = util::replace_all(util::replace_all(v[out.variant], "{b}", std::to_string(bus)), "{p}",
                                         std::to_string(pmw));
            break;
        }
        case TaskType::TargetedGen: {
            const auto buses = pv_buses(d);
            if (buses.empty()) return std::nullopt;
            const int bus = rng.pick(buses);
            double now = 0.0;
            for (const auto& g : d.pvs)
                if (g.bus == bus) {
                    now = g.p0;
                    break;
                }
            const double m = rng.pick(std::vector<double>{0.5, 0.75, 1.25, 1.5});
            const int pmw = round5(now * 100.0 * m);
            p["bus"] = bus;
            p["p"] = pmw / 100.0;
            static const std::vector<std::string> v{
                "Set the generator output at bus {b} to {p} MW and rerun the power flow.",
                "Redispatch the generator at bus {b} to {p} MW, then solve the power flow again."};
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = util::replace_all(util::replace_all(v[out.variant], "{b}", std::to_string(bus)), "{p}",
                                         std::to_string(pmw));
            break;
        }
        case TaskType::LineOutage:
        case TaskType::IslandingOutage: {
            const bool island = task == TaskType::IslandingOutage;
            const auto cands = outage_candidates(d, island);
            if (cands.empty()) return std::nullopt;
            const auto& line = d.lines[rng.pick(cands)];
            int a = line.bus1, b = line.bus2;
            if (rng.below(2) == 1) std::swap(a, b);
            p["bus_pair"] = {a, b};
            p["line"] = line.idx;
            std::vector<std::string> v{
                "Take the line between buses {a} and {b} out of service and rerun the power flow.",
                "Trip the line from bus {a} to bus {b} and solve the power flow again.",
                "Disconnect the line between bus {a} and bus {b}, then rerun the power flow."};
            if (island) {
                for (auto& s : v) s = util::replace_all(s, "rerun the power flow.", "report whether the grid islands.");
                for (auto& s : v)
                    s = util::replace_all(s, "solve the power flow again.", "report whether the grid islands.");
            } else if (corridor) {
                v.push_back("Take the corridor {a}-{b} out of service and rerun the power flow.");
            }
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = util::replace_all(util::replace_all(v[out.variant], "{a}", std::to_string(a)), "{b}",
                                         std::to_string(b));
            break;
        }
        case TaskType::NMinus1: {
            std::vector<std::size_t> live;
            for (std::size_t i = 0; i < d.lines.size(); ++i)
                if (d.lines[i].u != 0.0) live.push_back(i);
            if (live.size() < 3) return std::nullopt;
            std::vector<std::string> ids;
            while (ids.size() < 3) {
                const auto& id = d.lines[live[rng.below(live.size())]].idx;
                if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
            }
            p["candidates"] = ids;
            out.variant = static_cast<int>(rng.below(2));
            out.text = out.variant == 0
                           ? "Run an N-1 contingency analysis over " + ids[0] + ", " + ids[1] + " and " + ids[2] + "."
                           : "Perform N-1 screening on lines " + ids[0] + ", " + ids[1] + ", " + ids[2] +
                                 " and report the worst case.";
            break;
        }
        case TaskType::VoltageRanking: {
            if (!st.pf.converged) return std::nullopt;
            std::vector<int> ok;
            for (int k = 900; k <= 1100; ++k) {
                const double t = k / 1000.0;
                int below = 0;
                double margin = 1.0;
                for (double v : st.pf.vm) {
                    if (v < t) ++below;
                    margin = std::min(margin, std::abs(v - t));
                }
                if (below >= 1 && below <= 6 && margin >= 1e-4) ok.push_back(k);
            }
            if (ok.empty()) return std::nullopt;
            const double t = rng.pick(ok) / 1000.0;
            p["threshold"] = t;
            static const std::vector<std::string> v{"Rank the buses with voltage below {t} pu.",
                                                    "List all buses whose voltage is below {t}, ranked from lowest.",
                                                    "Rank all buses having voltage less than {t} pu."};
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = util::replace_all(v[out.variant], "{t}", format_number(t));
            break;
        }
        case TaskType::AngleRanking: {
            if (!st.pf.converged) return std::nullopt;
            std::vector<double> diffs;
            for (const auto& l : d.lines)
                if (l.u != 0.0)
                    diffs.push_back(std::abs(st.pf.va[*d.bus_position(l.bus1)] - st.pf.va[*d.bus_position(l.bus2)]) *
                                    180.0 / 3.14159265358979323846);
            std::vector<int> ok;
            for (int k = 1; k <= 120; ++k) {
                const double t = k * 0.5;
                int above = 0;
                double margin = 1e9;
                for (double x : diffs) {
                    if (x > t) ++above;
                    margin = std::min(margin, std::abs(x - t));
                }
                if (above >= 1 && above <= 8 && margin >= 1e-3) ok.push_back(k);
            }
            if (ok.empty()) return std::nullopt;
            const double t = rng.pick(ok) * 0.5;
            p["threshold"] = t;
            static const std::vector<std::string> v{
                "Rank the lines with angle difference above {t} degrees.",
                "Rank all lines whose angle separation is greater than {t} degrees.",
                "Rank the lines having an angular difference exceeding {t} deg."};
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = util::replace_all(v[out.variant], "{t}", format_number(t));
            break;
        }
        case TaskType::VoltagePlot: {
            p["file"] = kPlotFile;
            static const std::vector<std::string> v{"Plot the voltage profile and save it as voltage_profile.png.",
                                                    "Generate a voltage profile plot and save it as voltage_profile.png."};
            out.variant = static_cast<int>(rng.below(v.size()));
            out.text = v[out.variant];
            break;
        }
    }
    return out;
}

bool near_tie(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double gap = xs[i] - xs[i - 1];
        if (gap > 1e-11 && gap < 1e-7) return true;
    }
    return false;
}

// Values that decide orderings or threshold tests must sit clear of ties
// and bounds, so two solvers that agree to round-off cannot disagree on them.
bool well_separated(const OracleState& st, const TurnOp& op, const json& result) {
    if (!st.pf.converged) return true;
    if (near_tie(st.pf.vm)) return false;
    for (double v : st.pf.vm)
        if (std::abs(v - 0.95) < 1e-7 || std::abs(v - 1.05) < 1e-7) return false;
    if (op.task == TaskType::AngleRanking) {
        std::vector<double> diffs;
        for (const auto& r : result.at("line_ranking")) diffs.push_back(r.at("angle_diff").get<double>());
        if (near_tie(diffs)) return false;
    }
    if (op.task == TaskType::NMinus1) {
        std::vector<double> mins;
        for (const auto& [id, e] : result.at("contingencies").items())
            if (e.at("converged").get<bool>()) mins.push_back(e.at("min_v").get<double>());
        if (near_tie(mins)) return false;
    }
    return true;
}

std::vector<TaskType> filter(const std::vector<TaskType>& allowed, bool modification_only) {
    std::vector<TaskType> out;
    for (TaskType t : allowed) {
        if (t == TaskType::VoltageCheck && modification_only) continue;
        if (modification_only && (!is_modification_task(t) || t == TaskType::IslandingOutage)) continue;
        out.push_back(t);
    }
    return out;
}

std::optional<ScenarioSpec> try_scenario(ScenarioSpec spec, const SuiteOptions& o, Rng& rng) {
    const grid::CaseData base = scenario_base_case(spec);

    ScenarioTurn t1;
    t1.turn_index = 1;
    t1.op.task = TaskType::VoltageCheck;
    const std::uint64_t pick = rng.next();
    if (spec.source == CaseSource::Uploaded) {
        static const std::vector<std::string> v{
            "I uploaded {f}. Run a power flow on it and check the bus voltages.",
            "Using my uploaded case {f}, solve the power flow and report the bus voltages.",
            "Load the case file {f} I attached, run a power flow and check the voltage limits."};
        t1.phrasing = static_cast<int>(pick % v.size());
        t1.prompt = util::replace_all(v[t1.phrasing], "{f}", spec.case_identifier());
    } else {
        static const std::vector<std::string> v{
            "Load {c} and run a power flow. Check the bus voltages and report any violations.",
            "Run a power flow on {c} and report the bus voltages.",
            "Write a script that solves the power flow for {c} and check the voltage limits."};
        t1.phrasing = static_cast<int>(pick % v.size());
        t1.prompt = util::replace_all(v[t1.phrasing], "{c}", case_phrase(spec.case_id, pick / 7));
    }
    spec.turns = {t1};

    const auto mods = filter(o.task_types, true);
    auto any = filter(o.task_types, false);
    if (mods.empty() || any.empty()) throw Error("InvalidArgument", "task list has no usable follow-up tasks");

    for (int t = 2; t <= 3; ++t) {
        const OracleState st = replay(spec, t - 1);
        const TaskType task = rng.pick(t == 2 ? mods : any);
        if (spec.family == CaseFamily::PJM5 && task == TaskType::IslandingOutage) return std::nullopt;
        const auto d = draw(task, st, base, o.corridor_phrasing, rng);
        if (!d) return std::nullopt;
        ScenarioTurn turn;
        turn.turn_index = t;
        turn.op = d->op;
        turn.phrasing = d->variant;
        turn.prompt = d->text;
        spec.turns.push_back(turn);
    }

    for (int t = 1; t <= 3; ++t) {
        auto& turn = spec.turns[t - 1];
        const OracleState st = replay(spec, t);
        const bool island_task = turn.op.task == TaskType::IslandingOutage;
        if (!st.pf.converged && !island_task) return std::nullopt;
        if (island_task && (st.pf.converged || !st.pf.islanded)) return std::nullopt;
        const json result = oracle_result(st, spec, t);
        if (!well_separated(st, turn.op, result)) return std::nullopt;
        if (turn.op.task == TaskType::NMinus1) {
            // the worst case must exist and stay well separated from the rest
            if (result.at("worst_contingency").is_null()) return std::nullopt;
        }
        turn.grounding = grounding_checks(spec, turn.op.task);
        turn.continuity = continuity_checks(spec, t);
        turn.semantic_keys = semantic_keys(spec, t, result);
        if (turn.op.task == TaskType::VoltagePlot) turn.plot_file = kPlotFile;
    }
    return spec;
}

std::string padded_index(int i, int n) {
    const int width = std::max(3, static_cast<int>(std::to_string(n).size()));
    std::string s = std::to_string(i);
    return std::string(width - std::min<int>(width, static_cast<int>(s.size())), '0') + s;
}

}  // namespace

std::string to_string(TaskType t) {
    for (const auto& [k, n] : kTaskNames)
        if (k == t) return n;
    return "unknown";
}

std::optional<TaskType> task_from_string(const std::string& s) {
    for (const auto& [k, n] : kTaskNames)
        if (s == n) return k;
    return std::nullopt;
}

bool is_modification_task(TaskType t) {
    switch (t) {
        case TaskType::LoadAddition:
        case TaskType::LoadScaling:
        case TaskType::SlackSetpoint:
        case TaskType::PvSetpoint:
        case TaskType::TargetedLoad:
        case TaskType::TargetedGen:
        case TaskType::LineOutage:
        case TaskType::IslandingOutage: return true;
        default: return false;
    }
}

std::vector<TaskType> base_task_types() {
    return {TaskType::VoltageCheck,  TaskType::LoadAddition,   TaskType::LoadScaling,  TaskType::SlackSetpoint,
            TaskType::PvSetpoint,    TaskType::TargetedLoad,   TaskType::TargetedGen,  TaskType::LineOutage,
            TaskType::VoltageRanking, TaskType::AngleRanking, TaskType::VoltagePlot};
}

std::vector<TaskType> expanded_task_types() {
    auto v = base_task_types();
    v.push_back(TaskType::NMinus1);
    v.push_back(TaskType::IslandingOutage);
    return v;
}

json TurnOp::to_json() const { return {{"task", bench::to_string(task)}, {"params", params}}; }

TurnOp TurnOp::from_json(const json& j) {
    const auto t = task_from_string(j.at("task").get<std::string>());
    if (!t) throw Error("InvalidSuite", "unknown task " + j.at("task").dump());
    return {*t, j.value("params", json::object())};
}

std::optional<intent::LedgerEntry> ledger_entry(const TurnOp& op, int turn_index) {
    using intent::MarkerKind;
    intent::LedgerEntry e;
    e.turn_index = turn_index;
    const json& p = op.params;
    switch (op.task) {
        case TaskType::LoadScaling:
            e.marker = MarkerKind::LoadScaling;
            e.params = {{"factor", p.at("factor")}};
            break;
        case TaskType::LoadAddition:
            e.marker = MarkerKind::LoadAddition;
            e.params = {{"p", p.at("p")}, {"q", p.value("q", 0.0)}, {"bus", p.at("bus")}};
            break;
        case TaskType::SlackSetpoint:
            e.marker = MarkerKind::SetpointAdjustment;
            e.params = {{"device", "slack"}, {"v", p.at("v")}};
            break;
        case TaskType::PvSetpoint:
            e.marker = MarkerKind::SetpointAdjustment;
            e.params = {{"device", "pv"}, {"bus", p.at("bus")}, {"v", p.at("v")}};
            break;
        case TaskType::TargetedLoad:
            e.marker = MarkerKind::TargetedLoadChange;
            e.params = {{"bus", p.at("bus")}, {"p", p.at("p")}};
            break;
        case TaskType::TargetedGen:
            e.marker = MarkerKind::TargetedGenChange;
            e.params = {{"bus", p.at("bus")}, {"p", p.at("p")}};
            break;
        case TaskType::LineOutage:
        case TaskType::IslandingOutage:
            e.marker = MarkerKind::LineOutage;
            e.params = {{"bus_pair", p.at("bus_pair")}};
            break;
        default: return std::nullopt;
    }
    return e;
}

json WeightedCheck::to_json() const {
    json j = {{"weight", weight}, {"pattern", pattern}, {"kind", forbidden ? "forbidden" : "required"}, {"label", label}};
    if (min_count != 1) j["min_count"] = min_count;
    return j;
}

WeightedCheck WeightedCheck::from_json(const json& j) {
    WeightedCheck c;
    c.weight = j.at("weight").get<double>();
    c.pattern = j.at("pattern").get<std::string>();
    c.forbidden = j.value("kind", "required") == "forbidden";
    c.label = j.value("label", "");
    c.min_count = j.value("min_count", 1);
    if (c.min_count < 1) throw Error("InvalidSuite", "min_count must be at least 1");
    return c;
}

json ScenarioTurn::to_json() const {
    json g = json::array(), c = json::array();
    for (const auto& x : grounding) g.push_back(x.to_json());
    for (const auto& x : continuity) c.push_back(x.to_json());
    return {{"turn", turn_index},     {"op", op.to_json()},       {"prompt", prompt},
            {"phrasing", phrasing},   {"grounding", g},           {"continuity", c},
            {"semantic_keys", semantic_keys}, {"plot_file", plot_file ? json(*plot_file) : json(nullptr)}};
}

ScenarioTurn ScenarioTurn::from_json(const json& j) {
    ScenarioTurn t;
    t.turn_index = j.at("turn").get<int>();
    t.op = TurnOp::from_json(j.at("op"));
    t.prompt = j.at("prompt").get<std::string>();
    t.phrasing = j.value("phrasing", 0);
    for (const auto& x : j.at("grounding")) t.grounding.push_back(WeightedCheck::from_json(x));
    for (const auto& x : j.at("continuity")) t.continuity.push_back(WeightedCheck::from_json(x));
    t.semantic_keys = j.at("semantic_keys").get<std::vector<std::string>>();
    if (j.contains("plot_file") && !j["plot_file"].is_null()) t.plot_file = j["plot_file"].get<std::string>();
    return t;
}

std::string ScenarioSpec::case_identifier() const { return upload ? upload->file_name : case_id; }

bool ScenarioSpec::valid() const {
    if (turns.size() != 3 || turns[0].op.task != TaskType::VoltageCheck) return false;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].turn_index != static_cast<int>(i + 1)) return false;
        if (turns[i].semantic_keys.empty()) return false;
        const bool any_required = std::any_of(turns[i].grounding.begin(), turns[i].grounding.end(),
                                              [](const WeightedCheck& c) { return !c.forbidden; });
        if (!any_required) return false;
        for (const auto& c : turns[i].grounding)
            if (!(c.weight > 0)) return false;
    }
    return (source == CaseSource::Uploaded) == upload.has_value();
}

json ScenarioSpec::to_json() const {
    json t = json::array();
    for (const auto& x : turns) t.push_back(x.to_json());
    json up = nullptr;
    if (upload) up = {{"base", upload->base_case}, {"file", upload->file_name}, {"load_factor", upload->load_factor}};
    return {{"scenario_id", scenario_id}, {"family", intent::to_string(family)}, {"source", intent::to_string(source)},
            {"case", case_id},            {"upload", up},                       {"seed", seed},
            {"turns", t}};
}

ScenarioSpec ScenarioSpec::from_json(const json& j) {
    ScenarioSpec s;
    s.scenario_id = j.at("scenario_id").get<std::string>();
    const auto fam = intent::family_from_string(j.at("family").get<std::string>());
    if (!fam) throw Error("InvalidSuite", "unknown family " + j.at("family").dump());
    s.family = *fam;
    s.source = j.at("source").get<std::string>() == "Uploaded" ? CaseSource::Uploaded : CaseSource::BuiltIn;
    s.case_id = j.at("case").get<std::string>();
    if (j.contains("upload") && !j["upload"].is_null()) {
        const auto& u = j["upload"];
        s.upload = UploadSpec{u.at("base").get<std::string>(), u.at("file").get<std::string>(),
                              u.at("load_factor").get<double>()};
    }
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("turns")) s.turns.push_back(ScenarioTurn::from_json(t));
    if (!s.valid()) throw Error("InvalidSuite", "scenario " + s.scenario_id + " is malformed");
    return s;
}

json Suite::to_json() const {
    json fams = json::array(), srcs = json::array(), tasks = json::array(), sc = json::array();
    for (auto f : options.families) fams.push_back(intent::to_string(f));
    for (auto s : options.sources) srcs.push_back(intent::to_string(s));
    for (auto t : options.task_types) tasks.push_back(to_string(t));
    for (const auto& s : scenarios) sc.push_back(s.to_json());
    return {{"format", "pfagent-suite"},
            {"version", 1},
            {"seed", options.seed},
            {"n_scenarios", options.n_scenarios},
            {"families", fams},
            {"sources", srcs},
            {"task_types", tasks},
            {"corridor_phrasing", options.corridor_phrasing},
            {"scenarios", sc}};
}

Suite Suite::from_json(const json& j) {
    if (j.value("format", "") != "pfagent-suite") throw Error("InvalidSuite", "not a suite document");
    Suite s;
    s.options.seed = j.at("seed").get<std::uint64_t>();
    s.options.n_scenarios = j.at("n_scenarios").get<int>();
    s.options.families.clear();
    s.options.sources.clear();
    s.options.task_types.clear();
    for (const auto& f : j.at("families")) s.options.families.push_back(*intent::family_from_string(f.get<std::string>()));
    for (const auto& x : j.at("sources"))
        s.options.sources.push_back(x.get<std::string>() == "Uploaded" ? CaseSource::Uploaded : CaseSource::BuiltIn);
    for (const auto& t : j.at("task_types")) {
        const auto tt = task_from_string(t.get<std::string>());
        if (!tt) throw Error("InvalidSuite", "unknown task " + t.dump());
        s.options.task_types.push_back(*tt);
    }
    s.options.corridor_phrasing = j.value("corridor_phrasing", false);
    for (const auto& sc : j.at("scenarios")) s.scenarios.push_back(ScenarioSpec::from_json(sc));
    return s;
}

std::string Suite::dump() const { return to_json().dump(1) + "\n"; }

SuiteOptions expanded_suite_options(std::uint64_t seed) {
    SuiteOptions o;
    o.n_scenarios = 164;
    o.seed = seed;
    o.task_types = expanded_task_types();
    o.corridor_phrasing = true;
    return o;
}

std::string builtin_case_for(CaseFamily f) {
    switch (f) {
        case CaseFamily::IEEE14: return "ieee14";
        case CaseFamily::IEEE39: return "ieee39";
        case CaseFamily::Kundur: return "kundur";
        case CaseFamily::PJM5: return "pjm5";
        default: throw Error("InvalidArgument", "family " + intent::to_string(f) + " has no shipped case");
    }
}

Suite generate_suite(const SuiteOptions& options) {
    if (options.n_scenarios < 1) throw Error("InvalidArgument", "a suite needs at least one scenario");
    if (options.families.empty() || options.sources.empty() || options.task_types.empty())
        throw Error("InvalidArgument", "families, sources and task types must be non-empty");
    Suite suite{options, {}};
    std::mt19937_64 master(options.seed);
    const std::size_t cells = options.families.size() * options.sources.size();
    for (int i = 0; i < options.n_scenarios; ++i) {
        const std::size_t cell = static_cast<std::size_t>(i) % cells;
        ScenarioSpec spec;
        spec.scenario_id = "S" + padded_index(i + 1, options.n_scenarios);
        spec.family = options.families[cell / options.sources.size()];
        spec.source = options.sources[cell % options.sources.size()];
        spec.case_id = builtin_case_for(spec.family);
        spec.seed = master();
        Rng rng(spec.seed);
        if (spec.source == CaseSource::Uploaded) {
            const int k = 90 + static_cast<int>(rng.below(21));
            spec.upload = UploadSpec{spec.case_id, "user_" + spec.case_id + ".json", k / 100.0};
        }
        std::optional<ScenarioSpec> built;
        for (int attempt = 0; attempt < 500 && !built; ++attempt) built = try_scenario(spec, options, rng);
        if (!built) throw Error("GenerationFailure", "no valid draw for scenario " + spec.scenario_id);
        suite.scenarios.push_back(std::move(*built));
    }
    return suite;
}

Suite load_suite(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(util::read_file(path));
    } catch (const json::exception& e) {
        throw Error("InvalidSuite", path.string() + ": " + e.what());
    }
    return Suite::from_json(j);
}

void save_suite(const std::filesystem::path& path, const Suite& suite) { util::write_file_atomic(path, suite.dump()); }

void materialize_upload(const ScenarioSpec& spec, const std::filesystem::path& workspace) {
    if (!spec.upload) return;
    std::filesystem::create_directories(workspace);
    grid::save_case_file(workspace / spec.upload->file_name, scenario_base_case(spec));
}

}  // namespace pfagent::bench
