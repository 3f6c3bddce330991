#include "pfagent/reporting/report.hpp"

#include <cmath>
#include <cstdio>
#include <regex>

#include "pfagent/util/text.hpp"

namespace pfagent::reporting {

namespace {

std::string fmt4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    // trim trailing zeros but keep at least one decimal
    while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    if (s == "-0.0") s = "0.0";
    return s;
}

std::string val(const json& v) {
    if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fmt4(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

bool has(const json& r, const char* key) { return r.contains(key) && !r[key].is_null(); }

std::string exception_name(const std::string& stderr_text) {
    static const std::regex re(R"(^([A-Za-z_][\w.]*(?:Error|Exception|Interrupt|Exit)):?)");
    const auto lines = util::split_lines(stderr_text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::smatch m;
        if (std::regex_search(*it, m, re)) return m[1].str();
    }
    return {};
}

void collect_numbers(const json& j, std::vector<double>& out) {
    if (j.is_number()) out.push_back(j.get<double>());
    else if (j.is_object() || j.is_array())
        for (const auto& v : j) collect_numbers(v, out);
}

std::string success_summary(const json& r) {
    if (r.empty()) return "The script ran but produced no structured output.";
    std::string s;
    if (r.contains("converged")) {
        if (!r["converged"].get<bool>()) {
            s = "Power flow did not converge.";
            if (r.value("islanded", false)) s += " The network is islanded.";
        } else {
            s = "Power flow converged.";
        }
    }
    auto add = [&](const std::string& sentence) { s += (s.empty() ? "" : " ") + sentence; };
    if (has(r, "min_v") && has(r, "min_v_bus") && has(r, "max_v") && has(r, "max_v_bus"))
        add("Lowest voltage " + val(r["min_v"]) + " pu at bus " + val(r["min_v_bus"]) + "; highest " +
            val(r["max_v"]) + " pu at bus " + val(r["max_v_bus"]) + ".");
    else if (has(r, "min_v"))
        add("Lowest voltage " + val(r["min_v"]) + " pu.");
    if (has(r, "slack_p") && has(r, "slack_q"))
        add("Slack output " + val(r["slack_p"]) + " pu active and " + val(r["slack_q"]) + " pu reactive.");
    if (has(r, "total_load_p")) add("Total load " + val(r["total_load_p"]) + " pu.");
    if (has(r, "n_violations")) add(val(r["n_violations"]) + " buses outside the voltage limits.");
    if (has(r, "n_below")) {
        std::string t = val(r["n_below"]) + " buses below the threshold";
        if (r.contains("ranking") && r["ranking"].is_array() && !r["ranking"].empty()) {
            const auto& top = r["ranking"][0];
            t += "; rank " + val(top.value("rank", json(1))) + " is bus " + val(top.value("bus", json())) + " at " +
                 val(top.value("v", json())) + " pu";
        }
        add(t + ".");
    }
    if (has(r, "n_above")) {
        std::string t = val(r["n_above"]) + " lines above the angle threshold";
        if (r.contains("line_ranking") && r["line_ranking"].is_array() && !r["line_ranking"].empty()) {
            const auto& top = r["line_ranking"][0];
            t += "; the widest is " + val(top.value("line", json())) + " at " + val(top.value("angle_diff", json())) +
                 " degrees";
        }
        add(t + ".");
    }
    if (r.contains("n_nonconverged")) {
        std::string t = val(r["n_nonconverged"]) + " contingencies failed to converge";
        if (has(r, "worst_contingency") && has(r, "worst_min_v"))
            t += "; the worst is " + val(r["worst_contingency"]) + " with minimum voltage " + val(r["worst_min_v"]) + " pu";
        add(t + ".");
    }
    if (has(r, "plot_file")) add("Plot saved as " + val(r["plot_file"]) + ".");
    if (s.empty()) s = "The script produced a structured result.";
    return s;
}

}  // namespace

std::string to_string(TurnStatus s) {
    switch (s) {
        case TurnStatus::Success: return "Success";
        case TurnStatus::ExecutionFailed: return "ExecutionFailed";
        case TurnStatus::StaticCheckFailed: return "StaticCheckFailed";
        case TurnStatus::Answered: return "Answered";
        case TurnStatus::Rejected: return "Rejected";
    }
    return "Success";
}

json TurnReport::to_json() const {
    return {{"turn", turn_index},   {"status", to_string(status)},  {"summary", summary},
            {"result", result},     {"plot_files", plot_files},     {"code", code},
            {"log_excerpt", log_excerpt}, {"fix_history", fix_history}, {"fix_available", fix_available},
            {"error_class", error_class}};
}

TurnReport TurnReport::from_json(const json& j) {
    TurnReport t;
    t.turn_index = j.value("turn", 0);
    const std::string st = j.value("status", "Success");
    for (auto s : {TurnStatus::Success, TurnStatus::ExecutionFailed, TurnStatus::StaticCheckFailed,
                   TurnStatus::Answered, TurnStatus::Rejected})
        if (to_string(s) == st) t.status = s;
    t.summary = j.value("summary", "");
    t.result = j.value("result", json::object());
    t.plot_files = j.value("plot_files", std::vector<std::string>{});
    t.code = j.value("code", "");
    t.log_excerpt = j.value("log_excerpt", "");
    t.fix_history = j.value("fix_history", std::vector<std::string>{});
    t.fix_available = j.value("fix_available", false);
    t.error_class = j.value("error_class", "");
    return t;
}

TurnReport package_report(const execution::ExecutionRecord& record, const execution::GeneratedScript& script,
                          const intent::ParsedObjective& objective) {
    TurnReport t;
    t.turn_index = objective.turn_index;
    t.code = script.code;
    t.plot_files = record.plot_files;
    t.result = record.result.value_or(json::object());
    std::string excerpt = util::tail_lines(record.stdout_text, 20);
    if (!record.stderr_text.empty()) excerpt += (excerpt.empty() ? "" : "\n") + util::tail_lines(record.stderr_text, 20);
    t.log_excerpt = excerpt;
    if (record.ok()) {
        t.status = TurnStatus::Success;
        t.summary = success_summary(t.result);
        return t;
    }
    t.status = TurnStatus::ExecutionFailed;
    t.error_class = execution::to_string(record.error);
    t.fix_available = true;
    const std::string exc = exception_name(record.stderr_text);
    t.summary = "Execution failed: " + t.error_class + (exc.empty() ? "" : " (" + exc + ")") +
                ". Use the fix action to repair the script.";
    return t;
}

TurnReport error_report(int turn_index, TurnStatus status, const std::string& error_class, const std::string& message,
                        const std::string& code) {
    TurnReport t;
    t.turn_index = turn_index;
    t.status = status;
    t.error_class = error_class;
    t.summary = error_class + ": " + message;
    t.log_excerpt = message;
    t.code = code;
    t.fix_available = status == TurnStatus::StaticCheckFailed && !code.empty();
    return t;
}

TurnReport answer_report(int turn_index, const std::string& text) {
    TurnReport t;
    t.turn_index = turn_index;
    t.status = TurnStatus::Answered;
    t.summary = text;
    return t;
}

bool summary_traceable(const std::string& summary, const json& result) {
    std::vector<double> values;
    collect_numbers(result, values);
    // Numbers standing alone; identifiers such as Line_7 are not claims.
    static const std::regex num_re(R"((^|[\s(])(-?\d+(?:\.\d+)?)(?=[\s.,;:)]|$))");
    for (auto it = std::sregex_iterator(summary.begin(), summary.end(), num_re); it != std::sregex_iterator(); ++it) {
        const double claimed = std::stod((*it)[2].str());
        bool found = false;
        for (double v : values)
            if (std::fabs(v - claimed) <= 0.5e-4 + 1e-12) found = true;
        if (!found) return false;
    }
    return true;
}

}  // namespace pfagent::reporting
