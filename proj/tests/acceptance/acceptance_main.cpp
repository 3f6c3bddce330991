// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "pfagent/agent/session.hpp"
#include "pfagent/bench/runner.hpp"
#include "pfagent/evolution/evolution.hpp"
#include "pfagent/fixer/fixer.hpp"
#include "pfagent/knowledge/retrieval.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/paths.hpp"

using namespace pfagent;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kArithTol = 1e-9;          // worked-example arithmetic
constexpr double kResultTol = 1e-4;         // gate vs oracle values
constexpr double kPerfectRunBudgetS = 1800; // 30 minutes
constexpr int kAlgebraCases = 1200;

const fs::path kTmp = PFAGENT_TEST_TMP;

struct Outcome {
    bool pass = false;
    std::string detail;
};

fs::path fresh(const std::string& name) {
    const auto p = kTmp / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::shared_ptr<const agent::AgentResources> resources() {
    static const std::shared_ptr<const agent::AgentResources> r = agent::AgentResources::load_default();
    return r;
}

const bench::Suite& base_suite() {
    static const bench::Suite s = bench::generate_suite(bench::SuiteOptions{});
    return s;
}

bench::OracleCache& oracle_cache() {
    static bench::OracleCache c;
    return c;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(prec);
    o << v;
    return o.str();
}

std::string rate(const std::optional<double>& r) { return r ? fmt(100.0 * *r, 1) + "%" : "null"; }

// ---------------------------------------------------------------- 1
Outcome perfect_run() {
    bench::RunOptions ro;
    ro.workspace_root = fresh("perfect_run");
    ro.oracle_cache = &oracle_cache();
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = bench::run_benchmark(base_suite(), ro);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = r.invalid_scenarios.empty() && r.per_scenario_scores.size() == 100 && r.scenario_pass_rate &&
                    *r.scenario_pass_rate == 1.0 && r.mean_conversation_score && *r.mean_conversation_score == 100.0 &&
                    seconds < kPerfectRunBudgetS;
    return {ok, "scenarios=" + std::to_string(r.per_scenario_scores.size()) + " pass_rate=" + rate(r.scenario_pass_rate) +
                    " mean=" + (r.mean_conversation_score ? fmt(*r.mean_conversation_score, 6) : "null") +
                    " invalid=" + std::to_string(r.invalid_scenarios.size()) + " time=" + fmt(seconds, 1) + "s"};
}

// ---------------------------------------------------------------- 2
Outcome scoring_arithmetic() {
    using bench::WeightedCheck;
    std::vector<std::string> bad;
    const auto expect = [&](const char* what, double got, double want) {
        if (std::abs(got - want) > kArithTol) bad.push_back(std::string(what) + "=" + fmt(got, 12));
    };
    const std::vector<WeightedCheck> three{{2, "A", false, ""}, {1, "B", false, ""}, {2, "C", false, ""}};
    expect("gnd(2,1,2|1,0,1)", bench::weighted_pattern_score("A C", three, 25), 20.0);
    expect("gnd(all)", bench::weighted_pattern_score("A B C", three, 25), 25.0);
    expect("cont(all)", bench::weighted_pattern_score("A B C", three, 15), 15.0);
    auto with_forbidden = three;
    with_forbidden.push_back({2, "X", true, ""});
    expect("gnd(forbidden)", bench::weighted_pattern_score("A B C X", with_forbidden, 25), 15.0);

    bench::SemanticKeySpec s;
    s.keys = {"a", "b", "c", "d"};
    s.expected = {{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 3}};
    expect("sem(3/4)", bench::semantic_score({{"a", 1.0}, {"b", 2.0}, {"c", "x"}, {"d", 9}}, s), 18.75);
    expect("sem(2 missing)", bench::semantic_score({{"a", 1.0}, {"c", "x"}}, s), 12.5);
    bench::SemanticKeySpec z;
    z.keys = {"v"};
    z.expected = {{"v", 0.0}};
    expect("sem(diff=1e-4)", bench::semantic_score({{"v", 1e-4}}, z), 25.0);
    expect("sem(diff=1.0001e-4)", bench::semantic_score({{"v", 1.0001e-4}}, z), 0.0);

    // whole-turn arithmetic: perfect, crashed, plot present
    const auto ws = fresh("arith");
    bench::ScenarioTurn turn;
    turn.grounding = three;
    turn.continuity = {{1, "A", false, ""}};
    turn.plot_file = "p.png";
    util::write_file_atomic(ws / "p.png", "png");
    bench::SemanticKeySpec k;
    k.keys = {"v"};
    k.expected = {{"v", 1.0}};
    execution::ExecutionRecord rec;
    rec.exit_status = 0;
    rec.workspace = ws;
    rec.result = json{{"v", 1.00005}, {"plot_file", "p.png"}};
    const bench::TurnTranscript perfect{"```python\nA B C\n```", "A B C", rec};
    const auto sp = bench::score_turn(perfect, turn, k);
    expect("total(perfect)", sp.total, 100.0);
    expect("art(present)", sp.s_art, 5.0);
    if (!sp.pass) bad.push_back("perfect turn not passing");
    auto crashed = perfect;
    crashed.execution->exit_status = 1;
    const auto sc = bench::score_turn(crashed, turn, k);
    expect("total(crashed)", sc.total, 10.0 + 25.0 + 15.0);
    if (sc.pass) bad.push_back("crashed turn passing");

    std::string detail = "12 worked values checked to 1e-9";
    for (const auto& b : bad) detail += " MISMATCH " + b;
    return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 3, 4
// Fresh template-gate sessions over the whole suite: each turn's transcript
// is scored against the oracle, and every value the gate reports is compared
// with the oracle's own result.
struct Leaves {
    long compared = 0;
    std::vector<std::string> mismatches;
};

void compare_values(const json& got, const json& want, const std::string& path, Leaves& out) {
    if (want.is_object()) {
        if (!got.is_object()) {
            out.mismatches.push_back(path + " (not an object)");
            return;
        }
        for (const auto& [k, v] : want.items())
            if (got.contains(k)) compare_values(got.at(k), v, path.empty() ? k : path + "." + k, out);
        return;
    }
    if (want.is_array()) {
        if (!got.is_array() || got.size() != want.size()) {
            out.mismatches.push_back(path + " (array size)");
            return;
        }
        for (std::size_t i = 0; i < want.size(); ++i) compare_values(got[i], want[i], path + "." + std::to_string(i), out);
        return;
    }
    ++out.compared;
    const bool ok = want.is_number() && got.is_number() ? std::abs(got.get<double>() - want.get<double>()) <= kResultTol
                                                        : got == want;
    if (!ok) out.mismatches.push_back(path + " got " + got.dump() + " want " + want.dump());
}

Outcome g_consistency, g_agreement;

void gate_transcripts() {
    const auto root = fresh("gate_transcripts");
    long turns = 0, perfect = 0, scored_present = 0, scored_total = 0;
    std::vector<std::string> faults;
    Leaves leaves;
    for (const auto& spec : base_suite().scenarios) {
        try {
            const auto ws = root / spec.scenario_id;
            fs::create_directories(ws);
            bench::materialize_upload(spec, ws);
            agent::AgentConfig cfg;
            cfg.mode = agent::AgentMode::TemplateGate;
            agent::Session session(spec.scenario_id, ws, cfg, resources(), nullptr);
            for (const auto& t : spec.turns) {
                ++turns;
                std::vector<std::string> attached;
                if (t.turn_index == 1 && spec.upload) attached.push_back(spec.upload->file_name);
                const auto report = session.handle_turn(t.prompt, attached);
                const auto rec = session.turn(report.turn_index);
                bench::TurnTranscript tr;
                if (rec && rec->script) {
                    tr.response_text = rec->script->raw_response;
                    tr.code = rec->script->code;
                }
                if (rec) tr.execution = rec->execution;
                const auto expected = oracle_cache().get(spec, t.turn_index);
                const auto score = bench::score_turn(tr, t, expected);
                if (score.total == 100.0) ++perfect;
                else if (faults.size() < 5)
                    faults.push_back(spec.scenario_id + "/" + std::to_string(t.turn_index) + " total=" + fmt(score.total));

                const auto state = bench::replay(spec, t.turn_index);
                const json want = bench::oracle_result(state, spec, t.turn_index);
                const json got = rec && rec->execution && rec->execution->result ? *rec->execution->result : json::object();
                for (const auto& key : expected.keys) {
                    ++scored_total;
                    if (bench::lookup_path(got, key)) ++scored_present;
                    else leaves.mismatches.push_back(spec.scenario_id + " missing " + key);
                }
                Leaves one;
                compare_values(got, want, "", one);
                leaves.compared += one.compared;
                for (auto& m : one.mismatches) leaves.mismatches.push_back(spec.scenario_id + "/" + std::to_string(t.turn_index) + " " + m);
            }
        } catch (const std::exception& e) {
            faults.push_back(spec.scenario_id + " exception: " + e.what());
        }
    }
    std::string d3 = "turns=" + std::to_string(turns) + " total_100=" + std::to_string(perfect);
    for (const auto& f : faults) d3 += " | " + f;
    g_consistency = {turns == 300 && perfect == turns && faults.empty(), d3};

    std::string d4 = "turns=" + std::to_string(turns) + " values_compared=" + std::to_string(leaves.compared) +
                     " scored_keys_present=" + std::to_string(scored_present) + "/" + std::to_string(scored_total) +
                     " mismatches=" + std::to_string(leaves.mismatches.size()) + " tol=1e-4";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, leaves.mismatches.size()); ++i) d4 += " | " + leaves.mismatches[i];
    g_agreement = {turns == 300 && faults.empty() && leaves.mismatches.empty() && leaves.compared > 0 &&
                       scored_present == scored_total,
                   d4};
}

// ---------------------------------------------------------------- 5
Outcome continuity_degradation() {
    bench::RunOptions ro;
    ro.workspace_root = fresh("continuity");
    ro.oracle_cache = &oracle_cache();
    ro.config.mode = agent::AgentMode::Mock;
    ro.config.simulated.drop_ledger_from_turn = 3;
    const auto r = bench::run_benchmark(base_suite(), ro);
    const auto t1 = r.per_turn_pass_rates.at(0), t3 = r.per_turn_pass_rates.at(2);
    int t3_fail = 0, t3_fail_cont = 0;
    for (const auto& sc : r.per_scenario_scores) {
        if (sc.invalid) continue;
        const auto& s = sc.turns.at(2).score;
        if (s.pass) continue;
        ++t3_fail;
        if (std::find(s.failure_categories.begin(), s.failure_categories.end(), "continuity") != s.failure_categories.end())
            ++t3_fail_cont;
    }
    const bool ok = r.invalid_scenarios.empty() && t1 && t3 && *t1 > *t3 && t3_fail > 0 && t3_fail == t3_fail_cont;
    return {ok, "turn1=" + rate(t1) + " turn2=" + rate(r.per_turn_pass_rates.at(1)) + " turn3=" + rate(t3) +
                    " turn3_failures=" + std::to_string(t3_fail) + " with_continuity=" + std::to_string(t3_fail_cont)};
}

// ---------------------------------------------------------------- 6
Outcome evolution_recovery() {
    const auto suite = bench::generate_suite(bench::expanded_suite_options());
    const auto root = fresh("evolution");
    bench::OracleCache cache;
    bench::RunOptions ro;
    ro.workspace_root = root / "before";
    ro.oracle_cache = &cache;
    ro.config.mode = agent::AgentMode::Mock;
    ro.config.simulated.misuse_line_outage = true;
    ro.profile_path = root / "profile.json";
    const auto before = bench::run_benchmark(suite, ro);

    int outage_turns = 0, outage_grounding = 0;
    for (const auto& sc : before.per_scenario_scores)
        for (const auto& t : sc.turns) {
            if (t.task != "line_outage" && t.task != "islanding_outage") continue;
            ++outage_turns;
            const auto& c = t.score.failure_categories;
            if (std::find(c.begin(), c.end(), "grounding") != c.end()) ++outage_grounding;
        }

    const evolution::ProfileStore store(*ro.profile_path);
    const auto profile = bench::evolve_from_report(before, store, resources()->signatures, resources()->packs);
    const bool attributed = profile.root_cause_summary.count("line_outage_api_guardrail") > 0;

    ro.workspace_root = root / "after";
    const auto after = bench::run_benchmark(suite, ro);   // same suite, same provider, evolved profile

    const bool ok = before.invalid_scenarios.empty() && after.invalid_scenarios.empty() && outage_turns > 0 &&
                    outage_grounding == outage_turns && attributed && after.scenario_pass_rate &&
                    *after.scenario_pass_rate == 1.0;
    std::string packs;
    for (const auto& p : profile.active_packs) packs += (packs.empty() ? "" : ",") + p;
    return {ok, "scenarios=" + std::to_string(suite.scenarios.size()) + " before=" + rate(before.scenario_pass_rate) +
                    " outage_turns=" + std::to_string(outage_turns) + " with_grounding_failure=" +
                    std::to_string(outage_grounding) + " attributed_line_outage_api_guardrail=" +
                    (attributed ? "yes" : "no") + " packs=[" + packs + "] after=" + rate(after.scenario_pass_rate)};
}

// ---------------------------------------------------------------- 7
evolution::EvolutionProfile random_profile(std::mt19937_64& rng) {
    static const std::vector<std::string> packs{"conversation_continuity", "line_outage_guardrail", "corridor_language",
                                                "result_semantics", "p5", "p6"};
    static const std::vector<std::string> texts{"t1", "t2", "t3", "t4", "t5", "t6"};
    evolution::EvolutionProfile p;
    p.version = static_cast<long long>(rng() % 30);
    for (const auto& x : packs)
        if (rng() % 2) p.active_packs.push_back(x);
    std::shuffle(p.active_packs.begin(), p.active_packs.end(), rng);
    for (int i = 0; i < static_cast<int>(rng() % 8); ++i) p.guidance.push_back(texts[rng() % texts.size()]);
    for (const char* s : {"sa", "sb", "sc"}) {
        if (rng() % 2) continue;
        evolution::RootCause rc;
        rc.count = static_cast<long long>(rng() % 40);
        for (int i = 0; i < static_cast<int>(rng() % 4); ++i) rc.examples.push_back("e" + std::to_string(i));
        p.root_cause_summary[s] = rc;
    }
    return p;
}

Outcome profile_algebra() {
    std::mt19937_64 rng(11);
    const auto dir = fresh("algebra");
    const evolution::ProfileStore store(dir / "profile.json");
    const std::vector<std::string> prompts{"take the corridor 2-3 out", "scale all loads by 1.2",
                                           "take the line between bus 4 and 5 out", "check voltages"};
    const std::vector<std::string> dims{"grounding", "continuity", "semantic"};
    int cases = 0;
    std::vector<std::string> bad;
    const auto note = [&](bool ok, const char* what) {
        if (!ok && bad.size() < 5) bad.push_back(std::string(what) + "@" + std::to_string(cases));
    };
    for (; cases < kAlgebraCases; ++cases) {
        const auto a = random_profile(rng), b = random_profile(rng);
        const auto ab = evolution::merge_profiles(a, b), ba = evolution::merge_profiles(b, a);
        note(std::set(ab.active_packs.begin(), ab.active_packs.end()) == std::set(ba.active_packs.begin(), ba.active_packs.end()),
             "pack commutativity");
        std::map<std::string, long long> cab, cba;
        for (const auto& [k, v] : ab.root_cause_summary) cab[k] = v.count;
        for (const auto& [k, v] : ba.root_cause_summary) cba[k] = v.count;
        note(cab == cba, "count commutativity");
        for (const auto& [k, v] : cab) {
            long long want = 0;
            if (a.root_cause_summary.count(k)) want += a.root_cause_summary.at(k).count;
            if (b.root_cause_summary.count(k)) want += b.root_cause_summary.at(k).count;
            note(v == want, "count sum");
        }
        note(std::set(ab.guidance.begin(), ab.guidance.end()).size() == ab.guidance.size(), "guidance dedup");

        std::vector<evolution::FailureRecord> rs;
        for (int i = 0; i < static_cast<int>(rng() % 4); ++i) {
            evolution::FailureRecord r;
            r.prompt_text = prompts[rng() % prompts.size()];
            if (rng() % 2) r.error_text = "IndexError: index 40 is out of bounds";
            r.failed_dimensions = {dims[rng() % dims.size()]};
            r.scenario_id = "x";
            r.turn_index = 2;
            rs.push_back(r);
        }
        evolution::EvolutionProfile start;
        for (const auto& p : a.active_packs)
            if (resources()->packs.find(p)) start.active_packs.push_back(p);
        const auto up = evolution::update_profile(start, evolution::attribute_failures(rs, resources()->signatures),
                                                  resources()->signatures, resources()->packs);
        for (const auto& p : start.active_packs)
            note(std::find(up.active_packs.begin(), up.active_packs.end(), p) != up.active_packs.end(), "monotone packs");

        if (cases % 10 == 0) {
            store.save(ab);
            note(store.load() == ab, "save/load");
        }
        note(evolution::EvolutionProfile::from_json(json::parse(ab.to_json().dump())) == ab, "json round trip");
    }
    std::string d = "cases=" + std::to_string(cases);
    for (const auto& b : bad) d += " VIOLATION " + b;
    return {bad.empty() && cases >= 1000, d};
}

// ---------------------------------------------------------------- 8
Outcome fix_loop_bounds() {
    const std::string good =
        "```python\nimport json\nimport pfsim\nss = pfsim.load(pfsim.get_case(\"ieee14\"))\n"
        "print(\"RESULT_JSON: \" + json.dumps({\"converged\": bool(ss.PFlow.run())}))\n```";
    const std::string still_bad = "```python\nraise RuntimeError(\"still broken\")\n```";
    const auto ws = fresh("fix_loop");

    fixer::FixRequest req;
    req.user_message = "Run a power flow on ieee14.";
    req.failing_code = "import pfsim\nss = pfsim.load(pfsim.get_case('ieee14'))\nss.Line.u.v[3] = 0\n";
    req.output_and_errors = "Traceback (most recent call last):\nIndexError: index 3\n";
    req.case_identifier_and_config = "ieee14";
    req.turn_index = 1;

    std::vector<std::string> bad;
    int runs = 0;
    // Fixed at iteration n when n <= limit, BestEffort at the limit otherwise.
    for (int limit = 1; limit <= 3; ++limit) {
        for (int n = 1; n <= limit + 1; ++n) {
            std::vector<std::string> script(static_cast<std::size_t>(n - 1), still_bad);
            script.push_back(good);
            execution::ScriptedProvider p(script);
            fixer::RepairOptions opt;
            opt.retry_limit = limit;
            opt.workspace = ws;
            const auto out = fixer::repair_loop(req, p, nullptr, opt);
            ++runs;
            const bool want_fixed = n <= limit;
            if (out.iterations_used > limit) bad.push_back("over limit");
            if (want_fixed && (out.final != fixer::FixFinal::Fixed || out.iterations_used != n))
                bad.push_back("limit " + std::to_string(limit) + " n " + std::to_string(n) + " not fixed at n");
            if (!want_fixed && (out.final != fixer::FixFinal::BestEffort || out.iterations_used != limit))
                bad.push_back("limit " + std::to_string(limit) + " n " + std::to_string(n) + " not best effort");
        }
    }
    // Random failing code must reach the model byte for byte.
    std::mt19937_64 rng(5);
    const std::string alphabet = "abcXYZ019 _-+=()[]{}<>\"'`\\\t\n#$%&*;:,.?/|~^\xc3\xa9\xe2\x82\xac";
    for (int i = 0; i < 60; ++i) {
        fixer::FixRequest r = req;
        r.failing_code.clear();
        const int len = 1 + static_cast<int>(rng() % 300);
        for (int k = 0; k < len; ++k) r.failing_code += alphabet[rng() % alphabet.size()];
        r.failing_code += "\n";
        execution::ScriptedProvider p({still_bad});
        fixer::RepairOptions opt;
        opt.retry_limit = 1 + static_cast<int>(rng() % 3);
        opt.validate_locally = rng() % 4 != 0;
        opt.workspace = ws;
        const auto out = fixer::repair_loop(r, p, nullptr, opt);
        ++runs;
        if (out.iterations_used > opt.retry_limit) bad.push_back("random over limit");
        const auto hist = p.history();
        if (hist.empty() || hist[0].back().content.find(r.failing_code) == std::string::npos)
            bad.push_back("failing code altered in prompt");
    }
    std::string d = "runs=" + std::to_string(runs);
    for (std::size_t i = 0; i < std::min<std::size_t>(4, bad.size()); ++i) d += " VIOLATION " + bad[i];
    return {bad.empty(), d};
}

// ---------------------------------------------------------------- 9
using Snapshot = std::set<std::string>;

void walk(const fs::path& root, const std::set<fs::path>& skip, Snapshot& out) {
    std::error_code ec;
    if (!fs::exists(root, ec)) return;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec), end;
    for (; !ec && it != end; it.increment(ec)) {
        if (skip.count(it->path())) {
            it.disable_recursion_pending();
            continue;
        }
        out.insert(it->path().string());
    }
}

Snapshot snapshot() {
    Snapshot s;
    const fs::path repo = util::repo_root();
    walk(repo, {repo / "build", repo / ".git", fs::path(PFAGENT_TEST_TMP)}, s);
    walk("/tmp", {}, s);
    if (const char* home = std::getenv("HOME")) {
        const fs::path h = home;
        for (const char* sub : {".cache", ".config", ".local", ".matplotlib"}) walk(h / sub, {}, s);
        std::error_code ec;
        for (const auto& e : fs::directory_iterator(h, ec)) s.insert(e.path().string());
    }
    return s;
}

Outcome sandbox_confinement() {
    // A full template-gate benchmark run bracketed by snapshots of every
    // writable location outside the workspaces.
    const auto before = snapshot();
    bench::RunOptions ro;
    ro.workspace_root = fresh("confinement");
    ro.oracle_cache = &oracle_cache();
    const auto r = bench::run_benchmark(base_suite(), ro);
    const auto after = snapshot();
    std::vector<std::string> created;
    std::set_difference(after.begin(), after.end(), before.begin(), before.end(), std::back_inserter(created));
    std::string d = "scenarios=" + std::to_string(r.per_scenario_scores.size()) + " entries_watched=" +
                    std::to_string(after.size()) + " created_outside=" + std::to_string(created.size());
    for (std::size_t i = 0; i < std::min<std::size_t>(5, created.size()); ++i) d += " | " + created[i];
    return {created.empty() && r.per_scenario_scores.size() == 100, d};
}

// ---------------------------------------------------------------- 10
Outcome retrieval_sanity() {
    std::vector<std::string> bad;
    auto pages = knowledge::load_manual_pages(util::data_dir() / "manual" / "pfsim_manual.txt");
    const std::string sentinel = "The quartz heron calibrates every zephyr transformer at dawn.";
    const std::size_t planted = pages.size() / 2;
    pages[planted] += sentinel + "\n";
    const auto embed = std::make_shared<knowledge::HashedBagOfWords>();
    const auto idx = knowledge::SimilarityIndex::build(pages, 2, 1, embed);
    const auto hits = idx.retrieve("Please find: " + sentinel, 3);
    if (hits.empty() || hits[0].window.text.find(sentinel) == std::string::npos) bad.push_back("sentinel not rank 1");

    using R = std::vector<std::pair<int, int>>;
    if (knowledge::window_ranges(1, 3, 1) != R{{1, 1}}) bad.push_back("single page");
    if (knowledge::window_ranges(4, 10, 0) != R{{1, 4}}) bad.push_back("window larger than document");
    if (knowledge::window_ranges(10, 3, 1) != R{{1, 3}, {3, 5}, {5, 7}, {7, 9}, {9, 10}}) bad.push_back("stride");
    const auto one = knowledge::SimilarityIndex::build({"only page " + sentinel}, 5, 2, embed);
    if (one.windows().size() != 1 || one.retrieve(sentinel, 4).size() != 1) bad.push_back("single-page index");

    std::string d = "pages=" + std::to_string(pages.size()) + " planted_page=" + std::to_string(planted + 1) +
                    " rank1_window=" + (hits.empty() ? std::string("none")
                                                      : std::to_string(hits[0].window.start_page) + "-" +
                                                            std::to_string(hits[0].window.end_page));
    for (const auto& b : bad) d += " FAIL " + b;
    return {bad.empty(), d};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"deterministic_perfect_run", perfect_run},
        {"scoring_arithmetic", scoring_arithmetic},
        {"oracle_self_consistency",
         [] {
             gate_transcripts();
             return g_consistency;
         }},
        {"gate_oracle_agreement", [] { return g_agreement; }},
        {"continuity_degradation", continuity_degradation},
        {"evolution_recovery", evolution_recovery},
        {"profile_algebra", profile_algebra},
        {"fix_loop_bounds", fix_loop_bounds},
        {"sandbox_confinement", sandbox_confinement},
        {"retrieval_sanity", retrieval_sanity},
    };
    int failed = 0, i = 0;
    for (const auto& c : criteria) {
        ++i;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += o.pass ? 0 : 1;
        std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i, c.name, o.detail.c_str(), s);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
