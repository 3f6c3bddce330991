#include "pfagent/bench/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pfagent/util/error.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::bench {

namespace {

// Same rounding the scripts use for ordering, written out again here so the
// oracle shares no code with the script generator.
long long order_key(double v) { return static_cast<long long>(std::floor(v * 1e8 + 0.5)); }

std::size_t first_load_at(const grid::CaseData& data, int bus) {
    for (std::size_t i = 0; i < data.loads.size(); ++i)
        if (data.loads[i].bus == bus) return i;
    throw Error("OracleFailure", "no load at bus " + std::to_string(bus));
}

std::size_t pv_at(const grid::CaseData& data, int bus) {
    for (std::size_t i = 0; i < data.pvs.size(); ++i)
        if (data.pvs[i].bus == bus) return i;
    throw Error("OracleFailure", "no PV at bus " + std::to_string(bus));
}

std::size_t unique_line(const grid::CaseData& data, int a, int b) {
    const auto hits = data.lines_between(a, b);
    if (hits.size() != 1)
        throw Error("OracleFailure", "expected one line between " + std::to_string(a) + " and " + std::to_string(b));
    return hits.front();
}

struct Extremes {
    std::size_t lo = 0, hi = 0;
};

Extremes extremes(const std::vector<double>& v) {
    Extremes e;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (order_key(v[i]) < order_key(v[e.lo])) e.lo = i;
        if (order_key(v[i]) > order_key(v[e.hi])) e.hi = i;
    }
    return e;
}

std::vector<std::string> scored_keys(const ScenarioTurn& turn, const json& result) {
    if (!result.value("converged", false)) return {"converged", "islanded"};
    return turn.semantic_keys;
}

}  // namespace

json SemanticKeySpec::to_json() const {
    return {{"keys", keys}, {"expected", expected}, {"tolerance", tolerance}, {"oracle_converged", oracle_converged}};
}

grid::CaseData scenario_base_case(const ScenarioSpec& spec) {
    if (spec.upload) return grid::make_uploaded_variant(grid::load_builtin_case(spec.upload->base_case), spec.upload->load_factor);
    return grid::load_builtin_case(spec.case_id);
}

void apply_op(grid::CaseData& data, const TurnOp& op) {
    const json& p = op.params;
    switch (op.task) {
        case TaskType::LoadScaling: {
            const double f = p.at("factor").get<double>();
            for (auto& d : data.loads) {
                d.p0 *= f;
                d.q0 *= f;
            }
            break;
        }
        case TaskType::LoadAddition: {
            grid::PQRow row;
            row.idx = "oracle_added_" + std::to_string(data.loads.size());
            row.bus = p.at("bus").get<int>();
            row.p0 = p.at("p").get<double>();
            row.q0 = p.contains("q") && !p["q"].is_null() ? p["q"].get<double>() : 0.0;
            data.loads.push_back(row);
            break;
        }
        case TaskType::SlackSetpoint:
            if (data.slacks.empty()) throw Error("OracleFailure", "case has no slack");
            data.slacks.front().v0 = p.at("v").get<double>();
            break;
        case TaskType::PvSetpoint:
            data.pvs[pv_at(data, p.at("bus").get<int>())].v0 = p.at("v").get<double>();
            break;
        case TaskType::TargetedLoad:
            data.loads[first_load_at(data, p.at("bus").get<int>())].p0 = p.at("p").get<double>();
            break;
        case TaskType::TargetedGen:
            data.pvs[pv_at(data, p.at("bus").get<int>())].p0 = p.at("p").get<double>();
            break;
        case TaskType::LineOutage:
        case TaskType::IslandingOutage: {
            const auto& pair = p.at("bus_pair");
            data.lines[unique_line(data, pair.at(0).get<int>(), pair.at(1).get<int>())].u = 0.0;
            break;
        }
        default: break;
    }
}

OracleState replay(const ScenarioSpec& spec, int turn_index) {
    if (turn_index < 1 || turn_index > static_cast<int>(spec.turns.size()))
        throw Error("InvalidArgument", "turn " + std::to_string(turn_index) + " out of range");
    OracleState s{scenario_base_case(spec), {}};
    for (int t = 1; t <= turn_index; ++t) apply_op(s.data, spec.turns[t - 1].op);
    s.pf = grid::solve_power_flow(s.data);
    return s;
}

json oracle_result(const OracleState& state, const ScenarioSpec& spec, int turn_index) {
    const auto& data = state.data;
    const auto& pf = state.pf;
    const TurnOp& op = spec.turns.at(turn_index - 1).op;

    json r = {{"case", spec.case_identifier()}, {"converged", pf.converged}, {"islanded", pf.islanded}};
    double total = 0.0;
    for (const auto& d : data.loads)
        if (d.u != 0.0) total += d.p0;
    r["total_load_p"] = total;

    if (pf.converged) {
        const auto [sp, sq] = grid::generator_output(data, pf, "Slack", data.slacks.front().idx);
        r["slack_p"] = sp;
        r["slack_q"] = sq;
        const Extremes e = extremes(pf.vm);
        r["min_v"] = pf.vm[e.lo];
        r["min_v_bus"] = data.buses[e.lo].idx;
        r["max_v"] = pf.vm[e.hi];
        r["max_v_bus"] = data.buses[e.hi].idx;
        json volts = json::object();
        for (std::size_t i = 0; i < data.buses.size(); ++i) volts[std::to_string(data.buses[i].idx)] = pf.vm[i];
        r["voltages"] = volts;

        if (op.task == TaskType::VoltageCheck) {
            int n = 0;
            for (double v : pf.vm)
                if (v < 0.95 || v > 1.05) ++n;
            r["n_violations"] = n;
        }
        if (op.task == TaskType::VoltageRanking) {
            const double th = op.params.at("threshold").get<double>();
            std::vector<std::size_t> below;
            for (std::size_t i = 0; i < pf.vm.size(); ++i)
                if (pf.vm[i] < th) below.push_back(i);
            std::stable_sort(below.begin(), below.end(),
                             [&](std::size_t a, std::size_t b) { return order_key(pf.vm[a]) < order_key(pf.vm[b]); });
            json ranking = json::array();
            for (std::size_t k = 0; k < below.size(); ++k)
                ranking.push_back({{"bus", data.buses[below[k]].idx}, {"v", pf.vm[below[k]]}, {"rank", k + 1}});
            r["ranking"] = ranking;
            r["n_below"] = below.size();
        }
        if (op.task == TaskType::AngleRanking) {
            const double th = op.params.at("threshold").get<double>();
            struct Row {
                std::size_t pos;
                double diff;
            };
            std::vector<Row> rows;
            for (std::size_t k = 0; k < data.lines.size(); ++k) {
                const auto& ln = data.lines[k];
                if (ln.u == 0.0) continue;
                const double d = std::abs(pf.va[*data.bus_position(ln.bus1)] - pf.va[*data.bus_position(ln.bus2)]) *
                                 180.0 / std::numbers::pi;
                if (d > th) rows.push_back({k, d});
            }
            std::stable_sort(rows.begin(), rows.end(),
                             [](const Row& a, const Row& b) { return order_key(a.diff) > order_key(b.diff); });
            json ranking = json::array();
            for (std::size_t k = 0; k < rows.size(); ++k)
                ranking.push_back({{"line", data.lines[rows[k].pos].idx}, {"angle_diff", rows[k].diff}, {"rank", k + 1}});
            r["line_ranking"] = ranking;
            r["n_above"] = rows.size();
        }
        if (op.task == TaskType::VoltagePlot) r["plot_file"] = op.params.at("file");
    }

    if (op.task == TaskType::NMinus1) {
        json cont = json::object();
        int nonconv = 0;
        std::optional<std::string> worst;
        double worst_v = 0.0;
        for (const auto& c : op.params.at("candidates")) {
            const std::string id = c.get<std::string>();
            grid::CaseData trial = data;
            const auto pos = trial.line_position(id);
            if (!pos) throw Error("OracleFailure", "unknown candidate " + id);
            trial.lines[*pos].u = 0.0;
            const auto sol = grid::solve_power_flow(trial);
            json entry = {{"converged", sol.converged}, {"islanded", sol.islanded}};
            if (sol.converged) {
                const Extremes e = extremes(sol.vm);
                entry["min_v"] = sol.vm[e.lo];
                entry["min_v_bus"] = trial.buses[e.lo].idx;
                if (!worst || order_key(sol.vm[e.lo]) < order_key(worst_v)) {
                    worst = id;
                    worst_v = sol.vm[e.lo];
                }
            } else {
                ++nonconv;
            }
            cont[id] = entry;
        }
        r["contingencies"] = cont;
        r["n_nonconverged"] = nonconv;
        r["worst_contingency"] = worst ? json(*worst) : json(nullptr);
        r["worst_min_v"] = worst ? json(worst_v) : json(nullptr);
    }
    return r;
}

SemanticKeySpec verify_expected(const ScenarioSpec& spec, int turn_index) {
    const OracleState state = replay(spec, turn_index);
    const json result = oracle_result(state, spec, turn_index);
    const ScenarioTurn& turn = spec.turns.at(turn_index - 1);
    SemanticKeySpec out;
    // N-1 results stay meaningful when the pre-contingency case fails.
    out.oracle_converged = result.value("converged", false);
    out.keys = turn.op.task == TaskType::NMinus1 ? turn.semantic_keys : scored_keys(turn, result);
    for (const auto& k : out.keys) {
        const auto v = lookup_path(result, k);
        if (!v) throw Error("OracleFailure", "oracle result has no key " + k + " for " + spec.scenario_id);
        out.expected[k] = *v;
    }
    return out;
}

std::optional<json> lookup_path(const json& doc, const std::string& path) {
    const json* cur = &doc;
    for (const auto& seg : util::split(path, '.')) {
        if (cur->is_object()) {
            const auto it = cur->find(seg);
            if (it == cur->end()) return std::nullopt;
            cur = &*it;
        } else if (cur->is_array()) {
            const auto idx = util::parse_number(seg);
            if (!idx || *idx < 0 || *idx != std::floor(*idx) || *idx >= static_cast<double>(cur->size()))
                return std::nullopt;
            cur = &(*cur)[static_cast<std::size_t>(*idx)];
        } else {
            return std::nullopt;
        }
    }
    return *cur;
}

SemanticKeySpec OracleCache::get(const ScenarioSpec& spec, int turn_index) {
    const auto key = std::make_pair(spec.scenario_id, turn_index);
    {
        std::shared_lock lock(mu_);
        const auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    SemanticKeySpec value = verify_expected(spec, turn_index);
    std::unique_lock lock(mu_);
    return cache_.try_emplace(key, std::move(value)).first->second;
}

std::size_t OracleCache::size() const {
    std::shared_lock lock(mu_);
    return cache_.size();
}

}  // namespace pfagent::bench
