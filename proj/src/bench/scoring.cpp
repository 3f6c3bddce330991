#include "pfagent/bench/scoring.hpp"

#include <cmath>
#include <filesystem>
#include <regex>

#include "pfagent/execution/script.hpp"
#include "pfagent/util/error.hpp"

namespace pfagent::bench {

using nlohmann::json;

namespace {

bool pattern_matches(const std::string& code, const std::string& pattern, int min_count) {
    try {
        const std::regex re(pattern, std::regex::ECMAScript);
        if (min_count <= 1) return std::regex_search(code, re);
        const auto n = std::distance(std::sregex_iterator(code.begin(), code.end(), re), std::sregex_iterator());
        return n >= min_count;
    } catch (const std::regex_error& e) {
        throw Error("InvalidPattern", "check pattern '" + pattern + "': " + e.what());
    }
}

bool values_match(const json& got, const json& want, double tol) {
    if (want.is_number() && got.is_number() && want.is_number_float())
        return std::abs(got.get<double>() - want.get<double>()) <= tol;
    if (want.is_number() && got.is_number()) {
        // integers compare exactly, whatever JSON type carried them
        const double g = got.get<double>();
        return g == std::floor(g) && g == want.get<double>();
    }
    return got == want;
}

}  // namespace

double weighted_pattern_score(const std::string& code, const std::vector<WeightedCheck>& checks, double scale) {
    double total = 0.0, matched = 0.0, penalty = 0.0;
    for (const auto& c : checks) {
        if (!c.forbidden) total += c.weight;
    }
    if (!(total > 0.0)) throw Error("InvalidArgument", "weighted checks need at least one required check");
    for (const auto& c : checks) {
        if (!pattern_matches(code, c.pattern, c.min_count)) continue;
        if (c.forbidden) penalty += c.weight;
        else matched += c.weight;
    }
    return scale * std::max(0.0, matched - penalty) / total;
}

double semantic_score(const json& result, const SemanticKeySpec& spec) {
    if (spec.keys.empty()) throw Error("InvalidArgument", "semantic spec has no keys");
    std::size_t hits = 0;
    for (const auto& k : spec.keys) {
        const auto got = lookup_path(result, k);
        if (!got) continue;
        const auto it = spec.expected.find(k);
        if (it == spec.expected.end()) continue;
        if (values_match(*got, *it, spec.tolerance)) ++hits;
    }
    return kSemanticMax * static_cast<double>(hits) / static_cast<double>(spec.keys.size());
}

json TurnScore::to_json() const {
    return {{"format", s_fmt},       {"grounding", s_gnd}, {"continuity", s_cont},
            {"execution", s_exec},   {"semantic", s_sem},  {"artifact", s_art},
            {"artifact_applicable", art_applicable},       {"total", total},
            {"pass", pass},          {"failure_categories", failure_categories}};
}

TurnScore TurnScore::from_json(const json& j) {
    TurnScore s;
    s.s_fmt = j.at("format").get<double>();
    s.s_gnd = j.at("grounding").get<double>();
    s.s_cont = j.at("continuity").get<double>();
    s.s_exec = j.at("execution").get<double>();
    s.s_sem = j.at("semantic").get<double>();
    s.s_art = j.at("artifact").get<double>();
    s.art_applicable = j.value("artifact_applicable", false);
    s.total = j.at("total").get<double>();
    s.pass = j.at("pass").get<bool>();
    s.failure_categories = j.at("failure_categories").get<std::vector<std::string>>();
    return s;
}

TurnScore score_turn(const TurnTranscript& transcript, const ScenarioTurn& turn, const SemanticKeySpec& expected) {
    TurnScore s;
    s.s_fmt = execution::count_fenced_blocks(transcript.response_text) == 1 ? kFormatMax : 0.0;
    s.s_gnd = weighted_pattern_score(transcript.code, turn.grounding, kGroundingMax);
    s.s_cont = weighted_pattern_score(transcript.code, turn.continuity, kContinuityMax);

    const auto& rec = transcript.execution;
    const bool ran = rec && rec->exit_status == 0 && rec->ok();
    s.s_exec = ran ? kExecutionMax : 0.0;
    const json* result = ran && rec->result ? &*rec->result : nullptr;
    s.s_sem = result ? semantic_score(*result, expected) : 0.0;

    // A turn without a plot request cannot miss an artifact: full marks.
    s.art_applicable = turn.plot_file.has_value();
    if (!s.art_applicable) {
        s.s_art = kArtifactMax;
    } else if (result) {
        const auto named = lookup_path(*result, "plot_file");
        const bool right_name = named && named->is_string() && named->get<std::string>() == *turn.plot_file;
        const bool on_disk = std::filesystem::is_regular_file(rec->workspace / *turn.plot_file);
        s.s_art = right_name && on_disk ? kArtifactMax : 0.0;
    }

    s.total = s.s_fmt + s.s_gnd + s.s_cont + s.s_exec + s.s_sem + s.s_art;
    const auto check = [&](double got, double max, const char* name) {
        if (got < max) s.failure_categories.emplace_back(name);
    };
    check(s.s_fmt, kFormatMax, "format");
    check(s.s_gnd, kGroundingMax, "grounding");
    check(s.s_cont, kContinuityMax, "continuity");
    check(s.s_exec, kExecutionMax, "execution");
    check(s.s_sem, kSemanticMax, "semantic");
    if (s.art_applicable) check(s.s_art, kArtifactMax, "artifact");
    s.pass = s.failure_categories.empty();
    return s;
}

}  // namespace pfagent::bench
