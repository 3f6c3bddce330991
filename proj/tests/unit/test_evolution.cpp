#include "doctest.h"

#include <random>
#include <set>
#include <thread>

#include "pfagent/evolution/evolution.hpp"
#include "pfagent/intent/parser.hpp"
#include "pfagent/util/files.hpp"
#include "test_helpers.hpp"

using namespace pfagent;
using namespace pfagent::evolution;

namespace {

const SignatureLibrary& library() {
    static const auto l = SignatureLibrary::load_default();
    return l;
}

const PackRegistry& packs() {
    static const auto p = PackRegistry::load_default();
    return p;
}

FailureRecord record(const std::string& prompt, std::optional<std::string> err = std::nullopt,
                     std::optional<std::string> issue = std::nullopt, std::vector<std::string> dims = {}) {
    FailureRecord r;
    r.prompt_text = prompt;
    r.error_text = std::move(err);
    r.human_issue = std::move(issue);
    r.failed_dimensions = std::move(dims);
    r.scenario_id = "s";
    r.turn_index = 1;
    return r;
}

std::set<std::string> keys(const Activations& a) {
    std::set<std::string> out;
    for (const auto& [k, v] : a) out.insert(k);
    return out;
}

EvolutionProfile random_profile(std::mt19937_64& rng) {
    static const std::vector<std::string> pack_pool = {"A", "B", "C", "D", "E", "F"};
    static const std::vector<std::string> text_pool = {"g1", "g2", "g3", "g4", "g5", "g6", "g7"};
    static const std::vector<std::string> sig_pool = {"s1", "s2", "s3", "s4"};
    EvolutionProfile p;
    p.version = static_cast<long long>(rng() % 20);
    for (const auto& x : pack_pool)
        if (rng() % 2) p.active_packs.push_back(x);
    std::shuffle(p.active_packs.begin(), p.active_packs.end(), rng);
    for (const auto& x : text_pool)
        if (rng() % 2) p.guidance.push_back(x);
    std::shuffle(p.guidance.begin(), p.guidance.end(), rng);
    if (rng() % 3 == 0) p.marker_overrides.push_back("LineOutage|corridor {bus_a}-{bus_b}");
    for (const auto& s : sig_pool) {
        if (rng() % 2) continue;
        RootCause rc;
        rc.count = static_cast<long long>(rng() % 50);
        for (int i = 0; i < static_cast<int>(rng() % 7) && rc.examples.size() < kMaxExamples; ++i)
            rc.examples.push_back("x#" + std::to_string(rng() % 9));
        std::sort(rc.examples.begin(), rc.examples.end());
        rc.examples.erase(std::unique(rc.examples.begin(), rc.examples.end()), rc.examples.end());
        p.root_cause_summary[s] = rc;
    }
    return p;
}

std::set<std::string> pack_set(const EvolutionProfile& p) { return {p.active_packs.begin(), p.active_packs.end()}; }
std::set<std::string> guidance_set(const EvolutionProfile& p) { return {p.guidance.begin(), p.guidance.end()}; }

std::map<std::string, long long> counts(const EvolutionProfile& p) {
    std::map<std::string, long long> out;
    for (const auto& [k, v] : p.root_cause_summary) out[k] = v.count;
    return out;
}

}  // namespace

TEST_CASE("shipped library and registry are consistent") {
    CHECK(library().signatures().size() >= 8);
    for (const auto& s : library().signatures())
        for (const auto& id : s.linked_packs) CHECK_MESSAGE(packs().find(id) != nullptr, id);
    REQUIRE(packs().find("line_outage_guardrail"));
    bool has_alter = false;
    for (const auto& g : packs().find("line_outage_guardrail")->guidance)
        has_alter = has_alter || g.find("ss.Line.alter(\"u\", \"<Line idx>\", 0)") != std::string::npos;
    CHECK(has_alter);
}

TEST_CASE("attribution examples") {
    const auto corridor = attribute_failures(
        {record("take the corridor 4–5 out", "IndexError: list index out of range")}, library());
    CHECK(corridor.count("corridor_outage_language"));
    CHECK(corridor.count("line_outage_api_guardrail"));
    CHECK_FALSE(corridor.count(kUnattributed));

    const auto none = attribute_failures({record("hello there", "nothing relevant")}, library());
    CHECK(keys(none) == std::set<std::string>{kUnattributed});

    const auto issue = attribute_failures({record("run the study", std::nullopt, "agent ignored my uploaded file")},
                                          library());
    CHECK(keys(issue) == std::set<std::string>{"uploaded_case_confusion"});

    const auto dims = attribute_failures({record("check voltages", std::nullopt, std::nullopt, {"grounding", "semantic"})},
                                         library());
    CHECK(keys(dims) == std::set<std::string>{"grounding_failure", "semantic_failure"});

    // Case-insensitive patterns.
    CHECK(attribute_failures({record("TAKE THE CORRIDOR 1-2 OUT")}, library()).count("corridor_outage_language"));
}

TEST_CASE("update profile") {
    const EvolutionProfile empty;
    SUBCASE("empty activations only bump the version") {
        auto p = update_profile(empty, {}, library(), packs());
        CHECK(p.version == 1);
        p.version = 0;
        CHECK(p == empty);
    }
    SUBCASE("repeat activation increments counts without new guidance") {
        const auto acts = attribute_failures({record("take the line between bus 2 and 3 out", "x", {}, {"grounding"})},
                                             library());
        const auto p1 = update_profile(empty, acts, library(), packs());
        const auto p2 = update_profile(p1, acts, library(), packs());
        CHECK(p2.guidance == p1.guidance);
        CHECK(p2.active_packs == p1.active_packs);
        CHECK(p2.root_cause_summary.at("line_outage_api_guardrail").count == 2);
        CHECK(p2.root_cause_summary.at("line_outage_api_guardrail").examples == std::vector<std::string>{"s#1"});
        CHECK(p2.version == 2);
    }
    SUBCASE("example refs are capped") {
        std::vector<FailureRecord> rs;
        for (int i = 0; i < 9; ++i) {
            auto r = record("corridor", "e");
            r.turn_index = i;
            rs.push_back(r);
        }
        const auto p = update_profile(empty, attribute_failures(rs, library()), library(), packs());
        CHECK(p.root_cause_summary.at("corridor_outage_language").count == 9);
        CHECK(p.root_cause_summary.at("corridor_outage_language").examples.size() == kMaxExamples);
    }
    SUBCASE("marker overrides reach the intent parser") {
        const auto p = update_profile(empty, attribute_failures({record("take the corridor 4-5 out", "e")}, library()),
                                      library(), packs());
        auto vocab = intent::Vocabulary::load_default();
        CHECK(intent::extract_markers("take the corridor 4-5 out", vocab).empty());
        apply_overrides(p, vocab);
        const auto m = intent::extract_markers("take the corridor 4-5 out", vocab);
        REQUIRE(m.size() == 1);
        CHECK(m[0].marker == intent::MarkerKind::LineOutage);
    }
    SUBCASE("unknown pack") {
        SignatureLibrary lib;
        FailureSignature s;
        s.signature_id = "ghost";
        s.P = {"ghost"};
        s.linked_packs = {"no_such_pack"};
        lib.add(s);
        CHECK_THROWS_AS(update_profile(empty, attribute_failures({record("ghost", "e")}, lib), lib, packs()), UnknownPack);
    }
}

TEST_CASE("merge examples") {
    EvolutionProfile a, b;
    a.active_packs = {"A", "B"};
    b.active_packs = {"B", "C"};
    a.root_cause_summary["sig1"] = {2, {}};
    b.root_cause_summary["sig1"] = {3, {}};
    a.version = 4;
    b.version = 7;
    const auto m = merge_profiles(a, b);
    CHECK(m.active_packs == std::vector<std::string>{"A", "B", "C"});
    CHECK(m.root_cause_summary.at("sig1").count == 5);
    CHECK(m.version == 8);
    auto id = merge_profiles(a, EvolutionProfile{});
    CHECK(id.version == 5);
    id.version = a.version;
    CHECK(id == a);
}

TEST_CASE("profile algebra properties") {
    std::mt19937_64 rng(2024);
    const std::vector<std::string> prompts = {"take the corridor 2-3 out", "scale all loads by 1.1",
                                              "take the line between bus 7 and 8 out", "load user_ieee14.json",
                                              "check bus voltages", "rank buses below 0.97"};
    const std::vector<std::string> errors = {"", "KeyError: 'Line_9'", "Traceback (most recent call last):", "islanded"};
    const std::vector<std::string> dims = {"format", "grounding", "continuity", "execution", "semantic", "artifact"};
    for (int trial = 0; trial < 1200; ++trial) {
        const auto a = random_profile(rng), b = random_profile(rng), c = random_profile(rng);
        const auto ab = merge_profiles(a, b), ba = merge_profiles(b, a);
        CHECK(pack_set(ab) == pack_set(ba));
        CHECK(guidance_set(ab) == guidance_set(ba));
        CHECK(counts(ab) == counts(ba));
        CHECK(ab.version == std::max(a.version, b.version) + 1);
        const auto l = merge_profiles(merge_profiles(a, b), c), r = merge_profiles(a, merge_profiles(b, c));
        CHECK(pack_set(l) == pack_set(r));
        CHECK(counts(l) == counts(r));
        CHECK(std::set<std::string>(ab.guidance.begin(), ab.guidance.end()).size() == ab.guidance.size());

        // Round trip through the file format.
        CHECK(EvolutionProfile::from_json(json::parse(a.to_json().dump())) == a);

        // Update monotonicity and attribution determinism.
        std::vector<FailureRecord> rs;
        for (int i = 0; i < static_cast<int>(rng() % 4); ++i) {
            auto rec = record(prompts[rng() % prompts.size()]);
            const auto& e = errors[rng() % errors.size()];
            if (!e.empty()) rec.error_text = e;
            if (rng() % 2) rec.failed_dimensions.push_back(dims[rng() % dims.size()]);
            rec.turn_index = static_cast<int>(rng() % 3) + 1;
            rs.push_back(rec);
        }
        const auto acts = attribute_failures(rs, library());
        CHECK(keys(acts) == keys(attribute_failures(rs, library())));
        EvolutionProfile base = random_profile(rng);
        base.active_packs = {"islanding"};
        const auto up = update_profile(base, acts, library(), packs());
        for (const auto& pk : base.active_packs)
            CHECK(std::find(up.active_packs.begin(), up.active_packs.end(), pk) != up.active_packs.end());
        CHECK(up.version == base.version + 1);
        for (const auto& [k, v] : up.root_cause_summary) CHECK(v.count >= 0);
    }
}

TEST_CASE("profile store") {
    const auto dir = testutil::fresh_dir("evolution_store");
    ProfileStore store(dir / "evolution_profile.json");

    SUBCASE("fresh install gives an empty rule set") {
        const auto rules = load_active_rules(store.load());
        CHECK(rules.empty());
        CHECK_FALSE(store.last_load_error().has_value());
    }
    SUBCASE("rules mirror the profile") {
        EvolutionProfile p;
        p.active_packs = {"A", "B"};
        p.guidance = {"1", "2", "3", "4", "5"};
        store.save(p);
        const auto rules = load_active_rules(store.load());
        CHECK(rules.guidance.size() == 5);
        CHECK(rules.source_packs.size() == 2);
    }
    SUBCASE("truncated file falls back to empty") {
        EvolutionProfile p;
        p.guidance = {"keep me"};
        store.save(p);
        const auto text = util::read_file(store.path());
        util::write_file_atomic(store.path(), text.substr(0, text.size() / 2));
        CHECK(store.load() == EvolutionProfile{});
        REQUIRE(store.last_load_error().has_value());
        CHECK(store.last_load_error()->rfind("CorruptProfile", 0) == 0);
        store.update([](const EvolutionProfile& q) { return q; });
        CHECK(std::filesystem::exists(store.path().string() + ".corrupt"));
    }
    SUBCASE("queued records apply on the next cycle") {
        store.enqueue(record("take the corridor 4-5 out", "ValueError: 'Line 4-5' is not in list"));
        store.enqueue(record("nothing to see", "zzz"));
        CHECK(store.queued().size() == 2);
        const auto p = store.apply_queue(library(), packs());
        CHECK(std::find(p.active_packs.begin(), p.active_packs.end(), "corridor_language") != p.active_packs.end());
        CHECK(p.root_cause_summary.at(kUnattributed).count == 1);
        CHECK(store.queued().empty());
        CHECK(store.load() == p);
    }
    SUBCASE("concurrent updates are serialized") {
        std::vector<std::thread> ts;
        for (int i = 0; i < 8; ++i)
            ts.emplace_back([&] {
                ProfileStore s(store.path());
                for (int k = 0; k < 5; ++k)
                    s.update([](const EvolutionProfile& q) {
                        auto n = q;
                        n.version += 1;
                        return n;
                    });
            });
        for (auto& t : ts) t.join();
        CHECK(store.load().version == 40);
    }
}
