#include "doctest.h"

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "pfagent/bench/runner.hpp"
#include "pfagent/evolution/evolution.hpp"
#include "pfagent/grid/power_flow.hpp"
#include "pfagent/intent/parser.hpp"
#include "pfagent/util/files.hpp"
#include "test_helpers.hpp"

using namespace pfagent;
using namespace pfagent::bench;
using nlohmann::json;

namespace {

const Suite& default_suite() {
    static const Suite s = generate_suite(SuiteOptions{});
    return s;
}

const Suite& expanded_suite() {
    static const Suite s = generate_suite(expanded_suite_options());
    return s;
}

WeightedCheck req(double w, const std::string& p) { return {w, p, false, p}; }
WeightedCheck forb(double w, const std::string& p) { return {w, p, true, p}; }

intent::MarkerKind marker_for(TaskType t) {
    using intent::MarkerKind;
    switch (t) {
        case TaskType::VoltageCheck: return MarkerKind::VoltageCheck;
        case TaskType::LoadAddition: return MarkerKind::LoadAddition;
        case TaskType::LoadScaling: return MarkerKind::LoadScaling;
        case TaskType::SlackSetpoint:
        case TaskType::PvSetpoint: return MarkerKind::SetpointAdjustment;
        case TaskType::TargetedLoad: return MarkerKind::TargetedLoadChange;
        case TaskType::TargetedGen: return MarkerKind::TargetedGenChange;
        case TaskType::LineOutage:
        case TaskType::IslandingOutage: return MarkerKind::LineOutage;
        case TaskType::NMinus1: return MarkerKind::NMinus1;
        case TaskType::VoltageRanking:
        case TaskType::AngleRanking: return MarkerKind::Ranking;
        case TaskType::VoltagePlot: return MarkerKind::PlotRequest;
    }
    return MarkerKind::VoltageCheck;
}

bool has_marker(const intent::ParsedObjective& o, intent::MarkerKind m) {
    for (const auto& mk : o.markers)
        if (mk.marker == m) return true;
    return false;
}

/// Parse a scenario's three prompts in one intent session.
std::vector<intent::ParsedObjective> parse_scenario(const ScenarioSpec& s, const intent::Vocabulary& vocab) {
    static const auto aliases = intent::CaseAliases::load_default();
    intent::SessionIntentState st;
    std::vector<std::string> files;
    if (s.upload) files.push_back(s.upload->file_name);
    std::vector<intent::ParsedObjective> out;
    for (const auto& t : s.turns) {
        intent::UserTurn ut{t.turn_index, t.prompt, t.turn_index == 1 ? files : std::vector<std::string>{}, ""};
        out.push_back(intent::parse_turn(ut, st, vocab, aliases, files));
    }
    return out;
}

ScenarioTurn plain_turn() {
    ScenarioTurn t;
    t.grounding = {req(2, "load"), req(1, "run"), forb(2, "bad")};
    t.continuity = {req(1, "load")};
    t.semantic_keys = {"converged", "min_v"};
    return t;
}

SemanticKeySpec plain_expected() {
    SemanticKeySpec s;
    s.keys = {"converged", "min_v"};
    s.expected = {{"converged", true}, {"min_v", 0.97}};
    return s;
}

execution::ExecutionRecord ran_ok(const std::filesystem::path& ws, json result) {
    execution::ExecutionRecord r;
    r.exit_status = 0;
    r.workspace = ws;
    r.result = std::move(result);
    return r;
}

}  // namespace

TEST_CASE("weighted_pattern_score worked examples") {
    // required weights 2,1,2 with the middle one missing
    CHECK(weighted_pattern_score("A C", {req(2, "A"), req(1, "B"), req(2, "C")}, 25) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(weighted_pattern_score("A B C", {req(2, "A"), req(1, "B"), req(2, "C")}, 25) == 25.0);
    CHECK(weighted_pattern_score("A B C", {req(2, "A"), req(1, "B"), req(2, "C")}, 15) == 15.0);
    CHECK(weighted_pattern_score("A B C X", {req(2, "A"), req(1, "B"), req(2, "C"), forb(2, "X")}, 25) ==
          doctest::Approx(15.0).epsilon(1e-12));
    // penalty larger than what was matched floors at zero
    CHECK(weighted_pattern_score("X", {req(1, "A"), forb(3, "X")}, 25) == 0.0);
    CHECK_THROWS_AS(weighted_pattern_score("A", {forb(1, "A")}, 25), Error);
    CHECK_THROWS_AS(weighted_pattern_score("A", {req(1, "(")}, 25), Error);
}

TEST_CASE("weighted_pattern_score agrees with an exhaustive small-case oracle") {
    // Every assignment of up to four checks with weights 1..3, kind and match
    // state, scored against integer arithmetic done independently here.
    const std::vector<double> weights{1, 2, 3};
    int cases = 0;
    for (int n = 1; n <= 4; ++n) {
        int combos = 1;
        for (int i = 0; i < n; ++i) combos *= 3 * 2 * 2;
        for (int c = 0; c < combos; ++c) {
            std::vector<WeightedCheck> checks;
            std::string code;
            int req_total = 0, req_hit = 0, forb_hit = 0, rest = c;
            for (int i = 0; i < n; ++i) {
                const int w = static_cast<int>(weights[rest % 3]);
                rest /= 3;
                const bool forbidden = rest % 2 == 1;
                rest /= 2;
                const bool hit = rest % 2 == 1;
                rest /= 2;
                const std::string tok = "T" + std::to_string(i) + "x";
                checks.push_back({static_cast<double>(w), tok, forbidden, tok});
                if (hit) code += tok + " ";
                if (!forbidden) req_total += w;
                if (!forbidden && hit) req_hit += w;
                if (forbidden && hit) forb_hit += w;
            }
            if (req_total == 0) continue;
            for (double scale : {25.0, 15.0}) {
                const double want = scale * std::max(0, req_hit - forb_hit) / req_total;
                REQUIRE(weighted_pattern_score(code, checks, scale) == doctest::Approx(want).epsilon(1e-12));
            }
            ++cases;
        }
    }
    CHECK(cases > 20000);
}

TEST_CASE("weighted_pattern_score: repeated edits need one match each") {
    WeightedCheck twice = req(1, "\\*\\s*1\\.05");
    twice.min_count = 2;
    CHECK(weighted_pattern_score("p = p * 1.05", {twice}, 15) == 0.0);
    CHECK(weighted_pattern_score("p = p * 1.05\np = p * 1.05", {twice}, 15) == 15.0);
    CHECK(WeightedCheck::from_json(twice.to_json()) == twice);
    CHECK_FALSE(req(1, "x").to_json().contains("min_count"));
    json bad = twice.to_json();
    bad["min_count"] = 0;
    CHECK_THROWS_AS(WeightedCheck::from_json(bad), Error);

    // scenarios that repeat an edit carry the higher count into turn 3
    int repeated = 0;
    for (const auto& sc : default_suite().scenarios)
        for (const auto& c : sc.turns[2].continuity)
            if (c.min_count > 1) ++repeated;
    CHECK(repeated > 0);
}

TEST_CASE("semantic_score worked examples") {
    SemanticKeySpec s;
    s.keys = {"a", "b", "c", "d"};
    s.expected = {{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 3}};
    CHECK(semantic_score({{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 4}}, s) == doctest::Approx(18.75).epsilon(1e-12));
    CHECK(semantic_score({{"a", 1.0}, {"c", "x"}}, s) == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(semantic_score({{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 3}}, s) == 25.0);
    // integers compare exactly even when carried as floats
    CHECK(semantic_score({{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 3.0}}, s) == 25.0);
    CHECK(semantic_score({{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 3.00001}}, s) == doctest::Approx(18.75));

    SemanticKeySpec z;
    z.keys = {"v"};
    z.expected = {{"v", 0.0}};
    CHECK(semantic_score({{"v", 1e-4}}, z) == 25.0);       // boundary is inclusive
    CHECK(semantic_score({{"v", -1e-4}}, z) == 25.0);
    CHECK(semantic_score({{"v", 1.0001e-4}}, z) == 0.0);
    CHECK(semantic_score({{"v", "0.0"}}, z) == 0.0);
    CHECK(semantic_score({{"w", 0.0}}, z) == 0.0);

    SemanticKeySpec nested;
    nested.keys = {"ranking.0.bus", "voltages.14"};
    nested.expected = {{"ranking.0.bus", 14}, {"voltages.14", 1.02}};
    CHECK(semantic_score({{"ranking", {{{"bus", 14}}}}, {"voltages", {{"14", 1.02003}}}}, nested) == 25.0);
    CHECK_THROWS_AS(semantic_score(json::object(), SemanticKeySpec{}), Error);
}

TEST_CASE("score_turn: perfect, failed and plot turns") {
    const auto ws = testutil::fresh_dir("score_turn");
    const std::string code = "load(); run()";
    const TurnTranscript perfect{execution::fence(code), code, ran_ok(ws, {{"converged", true}, {"min_v", 0.97}})};
    const auto s = score_turn(perfect, plain_turn(), plain_expected());
    CHECK(s.total == 100.0);
    CHECK(s.pass);
    CHECK(s.failure_categories.empty());
    CHECK_FALSE(s.art_applicable);
    CHECK(s.s_art == 5.0);

    auto crashed = perfect;
    crashed.execution->exit_status = 1;
    const auto c = score_turn(crashed, plain_turn(), plain_expected());
    CHECK(c.s_exec == 0.0);
    CHECK(c.s_sem == 0.0);
    CHECK_FALSE(c.pass);
    CHECK(c.failure_categories == std::vector<std::string>{"execution", "semantic"});

    auto unrun = perfect;
    unrun.execution.reset();
    CHECK(score_turn(unrun, plain_turn(), plain_expected()).s_exec == 0.0);

    auto two_blocks = perfect;
    two_blocks.response_text += "\n" + execution::fence("x = 1");
    CHECK(score_turn(two_blocks, plain_turn(), plain_expected()).s_fmt == 0.0);

    // finished but printed no result: every key mismatches
    auto silent = perfect;
    silent.execution->result.reset();
    const auto q = score_turn(silent, plain_turn(), plain_expected());
    CHECK(q.s_exec == 20.0);
    CHECK(q.s_sem == 0.0);

    auto plot_turn = plain_turn();
    plot_turn.plot_file = "voltage_profile.png";
    auto plotted = perfect;
    plotted.execution->result = {{"converged", true}, {"min_v", 0.97}, {"plot_file", "voltage_profile.png"}};
    const auto missing = score_turn(plotted, plot_turn, plain_expected());
    CHECK(missing.art_applicable);
    CHECK(missing.s_art == 0.0);
    CHECK(missing.failure_categories == std::vector<std::string>{"artifact"});
    util::write_file_atomic(ws / "voltage_profile.png", "png");
    const auto present = score_turn(plotted, plot_turn, plain_expected());
    CHECK(present.s_art == 5.0);
    CHECK(present.total == 100.0);
    plotted.execution->result->at("plot_file") = "other.png";
    CHECK(score_turn(plotted, plot_turn, plain_expected()).s_art == 0.0);
}

TEST_CASE("property: score bounds, total and pass equivalence") {
    std::mt19937_64 rng(2024);
    const auto ws = testutil::fresh_dir("score_prop");
    util::write_file_atomic(ws / "p.png", "png");
    const std::vector<std::string> frags{"load", "run", "bad", "print", "RESULT_JSON", "alter"};
    for (int it = 0; it < 3000; ++it) {
        std::string code;
        for (const auto& f : frags)
            if (rng() % 2) code += f + "\n";
        std::string text;
        const int blocks = static_cast<int>(rng() % 3);
        for (int b = 0; b < blocks; ++b) text += execution::fence(code) + "\n";

        ScenarioTurn turn = plain_turn();
        if (rng() % 2) turn.plot_file = "p.png";
        TurnTranscript tr{text, code, std::nullopt};
        if (rng() % 4) {
            json result = {{"converged", rng() % 2 == 0}, {"min_v", 0.97 + (static_cast<double>(rng() % 5) - 2) * 1e-4}};
            if (rng() % 2) result["plot_file"] = "p.png";
            tr.execution = ran_ok(ws, result);
            if (rng() % 3 == 0) tr.execution->exit_status = 1;
            if (rng() % 5 == 0) tr.execution->result.reset();
        }
        const auto s = score_turn(tr, turn, plain_expected());
        REQUIRE((s.s_fmt == 0.0 || s.s_fmt == 10.0));
        REQUIRE((s.s_gnd >= 0.0 && s.s_gnd <= 25.0));
        REQUIRE((s.s_cont >= 0.0 && s.s_cont <= 15.0));
        REQUIRE((s.s_exec == 0.0 || s.s_exec == 20.0));
        REQUIRE((s.s_sem >= 0.0 && s.s_sem <= 25.0));
        REQUIRE((s.s_art == 0.0 || s.s_art == 5.0));
        REQUIRE(s.total <= 100.0);
        REQUIRE(s.total == doctest::Approx(s.s_fmt + s.s_gnd + s.s_cont + s.s_exec + s.s_sem + s.s_art));
        REQUIRE(s.pass == s.failure_categories.empty());
        REQUIRE(s.pass == (s.total == 100.0));
    }
}

TEST_CASE("property: grounding monotonicity") {
    std::mt19937_64 rng(99);
    for (int it = 0; it < 3000; ++it) {
        std::vector<WeightedCheck> checks;
        std::string code;
        const int n = 1 + static_cast<int>(rng() % 5);
        checks.push_back(req(1 + static_cast<double>(rng() % 3), "R0x"));
        for (int i = 1; i < n; ++i) {
            const std::string tok = "K" + std::to_string(i) + "x";
            checks.push_back({1 + static_cast<double>(rng() % 3), tok, rng() % 3 == 0, tok});
            if (rng() % 2) code += tok + " ";
        }
        if (rng() % 2) code += "R0x ";
        const double before = weighted_pattern_score(code, checks, 25);

        auto more = checks;
        more.push_back(req(1 + static_cast<double>(rng() % 3), "NEWx"));
        REQUIRE(weighted_pattern_score(code + " NEWx", more, 25) >= before - 1e-12);

        auto worse = checks;
        worse.push_back(forb(1 + static_cast<double>(rng() % 3), "BADx"));
        REQUIRE(weighted_pattern_score(code + " BADx", worse, 25) <= before + 1e-12);
    }
}

TEST_CASE("suite: stratified, valid and deterministic") {
    const Suite& s = default_suite();
    REQUIRE(s.scenarios.size() == 100);
    std::map<std::string, int> cells;
    std::set<std::string> ids;
    for (const auto& sc : s.scenarios) {
        CHECK(sc.valid());
        REQUIRE(sc.turns.size() == 3);
        CHECK(sc.turns[0].op.task == TaskType::VoltageCheck);
        CHECK(sc.turns[1].op.task != TaskType::IslandingOutage);
        CHECK(sc.source == (sc.upload ? intent::CaseSource::Uploaded : intent::CaseSource::BuiltIn));
        ++cells[intent::to_string(sc.family) + "/" + intent::to_string(sc.source)];
        ids.insert(sc.scenario_id);
        for (const auto& t : sc.turns) {
            CHECK_FALSE(t.grounding.empty());
            CHECK_FALSE(t.continuity.empty());
            CHECK_FALSE(t.semantic_keys.empty());
            CHECK(t.plot_file.has_value() == (t.op.task == TaskType::VoltagePlot));
        }
    }
    CHECK(ids.size() == 100);
    CHECK(cells.size() == 8);
    for (const auto& [cell, n] : cells) {
        INFO(cell);
        CHECK(n >= 12);
    }

    CHECK(generate_suite(SuiteOptions{}).dump() == s.dump());
    SuiteOptions other;
    other.seed = 8;
    CHECK(generate_suite(other).dump() != s.dump());

    const auto dir = testutil::fresh_dir("suite_io");
    save_suite(dir / "suite.json", s);
    const Suite back = load_suite(dir / "suite.json");
    CHECK(back.scenarios == s.scenarios);
    CHECK(back.dump() == s.dump());

    SuiteOptions bad;
    bad.n_scenarios = 0;
    CHECK_THROWS_AS(generate_suite(bad), Error);
    bad = SuiteOptions{};
    bad.families.clear();
    CHECK_THROWS_AS(generate_suite(bad), Error);
}

TEST_CASE("suite: expanded tasks are present") {
    const Suite& s = expanded_suite();
    REQUIRE(s.scenarios.size() == 164);
    std::map<TaskType, int> tasks;
    int corridor = 0;
    for (const auto& sc : s.scenarios)
        for (const auto& t : sc.turns) {
            ++tasks[t.op.task];
            if (t.prompt.find("corridor") != std::string::npos) ++corridor;
        }
    CHECK(tasks[TaskType::NMinus1] > 0);
    CHECK(tasks[TaskType::IslandingOutage] > 0);
    CHECK(tasks[TaskType::LineOutage] > 0);
    CHECK(corridor > 0);
}

TEST_CASE("suite: every prompt parses to the intended marker") {
    const auto base = intent::Vocabulary::load_default();
    auto corridor_vocab = base;
    corridor_vocab.add_marker_override("LineOutage|corridor {bus_a}-{bus_b}");

    for (const Suite* s : {&default_suite(), &expanded_suite()}) {
        for (const auto& sc : s->scenarios) {
            INFO(sc.scenario_id);
            bool corridor = false;
            for (const auto& t : sc.turns) corridor = corridor || t.prompt.find("corridor") != std::string::npos;
            const auto parsed = parse_scenario(sc, corridor ? corridor_vocab : base);
            for (std::size_t i = 0; i < 3; ++i) {
                INFO(sc.turns[i].prompt);
                CHECK(parsed[i].request_type == intent::RequestKind::RunnableCode);
                CHECK(has_marker(parsed[i], marker_for(sc.turns[i].op.task)));
                REQUIRE(parsed[i].case_ref.has_value());
                CHECK(parsed[i].case_ref->identifier == sc.case_identifier());
                CHECK(parsed[i].coding_gate_triggered);
            }
            if (corridor) {
                // without the learned phrase the corridor turn is not understood
                const auto plain = parse_scenario(sc, base);
                for (std::size_t i = 0; i < 3; ++i)
                    if (sc.turns[i].prompt.find("corridor") != std::string::npos)
                        CHECK_FALSE(has_marker(plain[i], intent::MarkerKind::LineOutage));
            }
        }
    }
}

TEST_CASE("oracle: baseline and islanding replay") {
    const std::string case14 = builtin_case_for(intent::CaseFamily::IEEE14);
    const auto stock = grid::load_builtin_case(case14);
    const auto pf = grid::solve_power_flow(stock);
    REQUIRE(pf.converged);

    ScenarioSpec spec;
    spec.scenario_id = "T1";
    spec.case_id = case14;
    spec.turns.resize(3);
    for (int i = 0; i < 3; ++i) spec.turns[i].turn_index = i + 1;
    spec.turns[0].op = {TaskType::VoltageCheck, json::object()};
    spec.turns[0].semantic_keys = {"converged", "max_v", "voltages.1"};
    spec.turns[1].op = {TaskType::LoadScaling, {{"factor", 1.2}}};
    spec.turns[1].semantic_keys = {"converged", "total_load_p"};
    const auto radial = stock.lines_between(7, 8);
    REQUIRE(radial.size() == 1);
    spec.turns[2].op = {TaskType::IslandingOutage, {{"bus_pair", {7, 8}}, {"line", stock.lines[radial[0]].idx}}};
    spec.turns[2].semantic_keys = {"converged", "islanded", "slack_p"};

    const auto t1 = verify_expected(spec, 1);
    CHECK(t1.expected.at("converged") == true);
    const auto slack_pos = *stock.bus_position(stock.slacks.front().bus);
    CHECK(t1.expected.at("voltages.1").get<double>() == doctest::Approx(pf.vm[slack_pos]).epsilon(1e-12));

    double base_load = 0;
    for (const auto& d : stock.loads) base_load += d.p0;
    const auto t2 = verify_expected(spec, 2);
    CHECK(t2.expected.at("total_load_p").get<double>() == doctest::Approx(1.2 * base_load).epsilon(1e-12));

    const auto t3 = verify_expected(spec, 3);
    CHECK_FALSE(t3.oracle_converged);
    CHECK(t3.keys == std::vector<std::string>{"converged", "islanded"});
    CHECK(t3.expected.at("islanded") == true);

    CHECK_THROWS_AS(replay(spec, 4), Error);
    OracleCache cache;
    CHECK(cache.get(spec, 2).expected == t2.expected);
    cache.get(spec, 2);
    CHECK(cache.size() == 1);
}

TEST_CASE("lookup_path") {
    const json doc = {{"a", {{"b", json::array({10, 20})}}}, {"x.y", 1}};
    CHECK(lookup_path(doc, "a.b.1") == json(20));
    CHECK_FALSE(lookup_path(doc, "a.b.2"));
    CHECK_FALSE(lookup_path(doc, "a.c"));
    CHECK(lookup_path(doc, "a")->is_object());
}

TEST_CASE("report: empty suite gives null rates") {
    Suite empty;
    RunOptions ro;
    ro.workspace_root = testutil::fresh_dir("bench_empty");
    const auto rep = run_benchmark(empty, ro);
    CHECK(rep.per_scenario_scores.empty());
    CHECK_FALSE(rep.scenario_pass_rate.has_value());
    CHECK_FALSE(rep.mean_conversation_score.has_value());
    const json j = rep.to_json();
    CHECK(j.at("scenario_pass_rate").is_null());
    CHECK(j.at("mean_conversation_score").is_null());
    for (const auto& r : j.at("per_turn_pass_rates")) CHECK(r.is_null());
}

TEST_CASE("run_benchmark: gate and scripted modes") {
    SuiteOptions o;
    o.n_scenarios = 8;
    const Suite s = generate_suite(o);

    RunOptions gate;
    gate.workspace_root = testutil::fresh_dir("bench_gate");
    int seen = 0;
    gate.on_scenario = [&](const ScenarioResult&) { ++seen; };
    const auto rep = run_benchmark(s, gate);
    CHECK(seen == 8);
    REQUIRE(rep.scenario_pass_rate.has_value());
    CHECK(*rep.scenario_pass_rate == 1.0);
    CHECK(*rep.mean_conversation_score == 100.0);
    for (const auto& sc : rep.per_scenario_scores) {
        CHECK(sc.conversation_score ==
              doctest::Approx((sc.turns[0].score.total + sc.turns[1].score.total + sc.turns[2].score.total) / 3.0));
    }

    // JSON round trip keeps every field
    const auto back = SuiteReport::from_json(rep.to_json());
    CHECK(back.to_json() == rep.to_json());
    CHECK(format_report_table(rep).find("100.0") != std::string::npos);

    // A provider that never writes code fails every turn but keeps running.
    RunOptions junk;
    junk.workspace_root = testutil::fresh_dir("bench_junk");
    junk.config.mode = agent::AgentMode::Mock;
    junk.config.max_attempts = 1;
    junk.provider_factory = [](const ScenarioSpec&) {
        return std::make_shared<execution::ScriptedProvider>(std::vector<std::string>{"```python\nprint('hi')\n```"});
    };
    const auto bad = run_benchmark(s, junk);
    CHECK(bad.invalid_scenarios.empty());
    CHECK(*bad.scenario_pass_rate == 0.0);
    CHECK(bad.failure_category_histogram.at("grounding") == 24);
    CHECK(failure_records(bad).size() == 24);

    // Provider failures are scored, not treated as infrastructure failures.
    RunOptions down;
    down.workspace_root = testutil::fresh_dir("bench_down");
    down.config.mode = agent::AgentMode::Mock;
    down.provider_factory = [](const ScenarioSpec&) {
        return std::make_shared<execution::FunctionProvider>(
            [](const std::vector<execution::ChatMessage>&) -> std::string {
                throw execution::ProviderError("connection refused");
            },
            "down");
    };
    Suite one;
    one.scenarios = {s.scenarios.front()};
    const auto d = run_benchmark(one, down);
    REQUIRE(d.per_scenario_scores.size() == 1);
    CHECK_FALSE(d.per_scenario_scores[0].invalid);
    CHECK(d.per_scenario_scores[0].turns[0].status == "ProviderError");
    CHECK(d.per_scenario_scores[0].turns[0].score.s_exec == 0.0);
}
