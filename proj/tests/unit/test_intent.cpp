#include "doctest.h"

#include <random>

#include "pfagent/intent/parser.hpp"

using namespace pfagent::intent;

namespace {

const Vocabulary& vocab() {
    static const Vocabulary v = Vocabulary::load_default();
    return v;
}

const CaseAliases& aliases() {
    static const CaseAliases a = CaseAliases::load_default();
    return a;
}

std::vector<IntentMarker> markers(const std::string& text) { return extract_markers(text, vocab()); }

}  // namespace

TEST_CASE("request classification") {
    CHECK(classify_request("Give me runnable Python code to run power flow on IEEE 14", {}, vocab()) ==
          RequestKind::RunnableCode);
    CHECK(classify_request("Explain why the slack bus exists", {}, vocab()) == RequestKind::ConceptualExplanation);
    CHECK(classify_request("run it", {}, vocab()) == RequestKind::RunnableCode);
    CHECK(classify_request("why did this fail?", TurnContext{true}, vocab()) == RequestKind::DebuggingInsight);
    CHECK(classify_request("why did this fail?", TurnContext{false}, vocab()) ==
          RequestKind::ConceptualExplanation);
    CHECK(classify_request("explain the script you wrote", {}, vocab()) == RequestKind::RunnableCode);
}

TEST_CASE("case source detection") {
    const std::vector<std::string> files{"my_grid.xlsx", "user_ieee14.json"};
    auto ref = detect_case_source("load my_grid.xlsx and run it", files, {}, std::nullopt, aliases());
    REQUIRE(ref);
    CHECK(ref->source == CaseSource::Uploaded);
    CHECK(ref->identifier == "my_grid.xlsx");
    CHECK(ref->family == CaseFamily::Other);

    ref = detect_case_source("use the IEEE 14 bus system", files, {}, std::nullopt, aliases());
    REQUIRE(ref);
    CHECK(ref->source == CaseSource::BuiltIn);
    CHECK(ref->identifier == "ieee14");

    for (const char* text : {"ieee14", "IEEE-39", "the IEEE 39-bus case", "Kundur two-area", "pjm 5", "PJM5"}) {
        CAPTURE(text);
        CHECK(detect_case_source(text, {}, {}, std::nullopt, aliases()).has_value());
    }

    const CaseReference active{CaseSource::BuiltIn, "ieee39", CaseFamily::IEEE39};
    ref = detect_case_source("now scale loads by 1.1", files, {}, active, aliases());
    CHECK(ref == active);

    ref = detect_case_source("I uploaded user_ieee14.json. Run a power flow.", files, {}, std::nullopt, aliases());
    REQUIRE(ref);
    CHECK(ref->source == CaseSource::Uploaded);
    CHECK(ref->family == CaseFamily::IEEE14);

    CHECK_THROWS_WITH_AS(detect_case_source("compare user_ieee14.json with ieee39", files, {}, std::nullopt, aliases()),
                         doctest::Contains("ieee39"), pfagent::Error);
    CHECK_FALSE(detect_case_source("run it", files, {}, std::nullopt, aliases()).has_value());

    ref = detect_case_source("run this", files, {"my_grid.xlsx"}, active, aliases());
    CHECK(ref->identifier == "my_grid.xlsx");
}

TEST_CASE("marker extraction with units") {
    auto m = markers("scale all loads by 1.2");
    REQUIRE(m.size() == 1);
    CHECK(m[0].marker == MarkerKind::LoadScaling);
    CHECK(m[0].params["factor"].get<double>() == 1.2);

    m = markers("take the line between bus 4 and bus 5 out of service");
    REQUIRE(m.size() == 1);
    CHECK(m[0].marker == MarkerKind::LineOutage);
    CHECK(m[0].params["bus_pair"] == nlohmann::json::array({4, 5}));

    m = markers("Increase all loads by 15%.");
    REQUIRE(m.size() == 1);
    CHECK(m[0].params["factor"].get<double>() == doctest::Approx(1.15));

    m = markers("scale the loads by 120%");
    CHECK(m[0].params["factor"].get<double>() == doctest::Approx(1.2));

    m = markers("Add a 50 MW load at bus 9, then check the bus voltages.");
    REQUIRE(m.size() == 2);
    CHECK(m[0].marker == MarkerKind::LoadAddition);
    CHECK(m[0].params["p"].get<double>() == 0.5);
    CHECK(m[0].params["bus"].get<int>() == 9);
    CHECK(m[0].params["q"].get<double>() == 0.0);
    CHECK(m[1].marker == MarkerKind::VoltageCheck);

    m = markers("add a load of 0.3 pu and 10 MVAr at bus 4");
    REQUIRE(m.size() == 1);
    CHECK(m[0].params["p"].get<double>() == 0.3);
    CHECK(m[0].params["q"].get<double>() == 0.1);

    m = markers("set the slack voltage to 1.05 pu");
    REQUIRE(m.size() == 1);
    CHECK(m[0].params["device"] == "slack");
    CHECK(m[0].params["v"].get<double>() == 1.05);

    m = markers("set the generator voltage setpoint at bus 3 to 1.02");
    REQUIRE(m.size() == 1);
    CHECK(m[0].params["device"] == "pv");
    CHECK(m[0].params["bus"].get<int>() == 3);

    m = markers("Run an N-1 contingency analysis over lines Line_1, Line_3 and Line_7.");
    REQUIRE(m.size() == 1);
    CHECK(m[0].marker == MarkerKind::NMinus1);
    CHECK(m[0].params["candidates"] == nlohmann::json::array({"Line_1", "Line_3", "Line_7"}));

    m = markers("rank the buses with voltage below 1.0 pu");
    REQUIRE(m.size() == 1);
    CHECK(m[0].params["kind"] == "voltage");
    CHECK(m[0].params["threshold"].get<double>() == 1.0);

    m = markers("rank the lines whose angle difference is above 5 degrees and plot the voltage profile");
    REQUIRE(m.size() == 2);
    CHECK(m[0].params["kind"] == "angle");
    CHECK(m[1].marker == MarkerKind::PlotRequest);

    m = markers("set the generator output at bus 2 to 60 MW");
    REQUIRE(m.size() == 1);
    CHECK(m[0].marker == MarkerKind::TargetedGenChange);
    CHECK(m[0].params["p"].get<double>() == 0.6);
}

TEST_CASE("malformed numeric argument reports its span") {
    const std::string text = "scale loads by one-point-two";
    try {
        markers(text);
        FAIL("expected MalformedParam");
    } catch (const MalformedParam& e) {
        CHECK(e.kind() == "MalformedParam");
        CHECK(text.substr(e.span().begin, e.span().end - e.span().begin) == "one-point-two");
    }
}

TEST_CASE("overlapping matches keep the longest") {
    // "check the bus voltages" nested inside nothing; the plot phrase wins over a shorter overlap
    auto m = markers("plot the bus voltage profile");
    REQUIRE(m.size() == 1);
    CHECK(m[0].marker == MarkerKind::PlotRequest);
}

TEST_CASE("marker overrides extend the vocabulary") {
    Vocabulary v = Vocabulary::load_default();
    CHECK(extract_markers("take the corridor 4–5 out", v).empty());
    v.add_marker_override("LineOutage|corridor {bus_a}-{bus_b}");
    const auto m = extract_markers("take the corridor 4–5 out", v);
    REQUIRE(m.size() == 1);
    CHECK(m[0].marker == MarkerKind::LineOutage);
    CHECK(m[0].params["bus_pair"] == nlohmann::json::array({4, 5}));
    CHECK_THROWS_AS(v.add_marker_override("LineOutage|corridor {bus_a}"), pfagent::Error);
}

TEST_CASE("parse_turn carries the ledger and supersedes overrides") {
    SessionIntentState st;
    auto o1 = parse_turn({1, "run power flow on ieee14", {}, ""}, st, vocab(), aliases(), {});
    CHECK(o1.coding_gate_triggered);
    CHECK(o1.ledger.empty());
    auto o2 = parse_turn({2, "now scale loads by 1.1", {}, ""}, st, vocab(), aliases(), {});
    REQUIRE(o2.case_ref);
    CHECK(o2.case_ref->identifier == "ieee14");
    REQUIRE(o2.ledger.entries.size() == 1);
    CHECK(o2.ledger.entries[0].marker == MarkerKind::LoadScaling);
    CHECK(o2.ledger.entries[0].params["factor"].get<double>() == 1.1);

    SessionIntentState s2;
    parse_turn({1, "run power flow on ieee14", {}, ""}, s2, vocab(), aliases(), {});
    parse_turn({2, "set slack voltage to 1.05", {}, ""}, s2, vocab(), aliases(), {});
    auto o3 = parse_turn({3, "set slack voltage to 1.02", {}, ""}, s2, vocab(), aliases(), {});
    CHECK(o3.ledger.entries.size() == 2);
    CHECK(o3.ledger.superseded == std::set<std::size_t>{0});
    CHECK(o3.ledger.active().at(0).params["v"].get<double>() == 1.02);
}

TEST_CASE("gate requires complete params") {
    SessionIntentState st;
    parse_turn({1, "run power flow on ieee14", {}, ""}, st, vocab(), aliases(), {});
    auto o = parse_turn({2, "change the load to 50 MW", {}, ""}, st, vocab(), aliases(), {});
    REQUIRE(o.markers.size() == 1);
    CHECK(o.markers[0].marker == MarkerKind::TargetedLoadChange);
    CHECK_FALSE(o.coding_gate_triggered);
    CHECK(o.ledger.empty());

    SessionIntentState none;
    CHECK_FALSE(parse_turn({1, "run it", {}, ""}, none, vocab(), aliases(), {}).coding_gate_triggered);

    SessionIntentState pv;
    parse_turn({1, "run power flow on ieee14", {}, ""}, pv, vocab(), aliases(), {});
    CHECK_FALSE(parse_turn({2, "set the generator voltage to 1.03", {}, ""}, pv, vocab(), aliases(), {})
                    .coding_gate_triggered);
}

TEST_CASE("parse errors leave the session state untouched") {
    SessionIntentState st;
    parse_turn({1, "run power flow on ieee14 and scale loads by 1.1", {}, ""}, st, vocab(), aliases(), {});
    const auto before = st.ledger;
    CHECK_THROWS_AS(parse_turn({2, "scale loads by lots", {}, ""}, st, vocab(), aliases(), {}), MalformedParam);
    CHECK(st.ledger == before);
    CHECK(st.last_turn_index == 1);
}

TEST_CASE("property: ledger monotonicity, case continuity and determinism over random sessions") {
    const std::vector<std::string> mods = {
        "scale all loads by 1.05",         "set slack voltage to 1.03",      "set slack voltage to 1.01",
        "add a 20 MW load at bus 5",       "set the load at bus 9 to 30 MW", "set the load at bus 9 to 25 MW",
        "take the line between bus 2 and bus 3 out of service",
        "set the generator voltage setpoint at bus 2 to 1.04", "check the bus voltages",
        "plot the voltage profile",        "set the generator output at bus 3 to 40 MW",
    };
    std::mt19937_64 rng(20240611);
    for (int trial = 0; trial < 300; ++trial) {
        SessionIntentState st;
        auto first = parse_turn({1, "run power flow on ieee14", {}, ""}, st, vocab(), aliases(), {});
        ModificationLedger prev = first.ledger;
        const int turns = 2 + static_cast<int>(rng() % 6);
        for (int t = 2; t <= turns; ++t) {
            const std::string& text = mods[rng() % mods.size()];
            auto obj = parse_turn({t, text, {}, ""}, st, vocab(), aliases(), {});
            CHECK(obj.case_ref->identifier == "ieee14");
            // every entry that was live stays live unless a same-target entry arrived this turn
            for (std::size_t i = 0; i < prev.entries.size(); ++i) {
                if (prev.superseded.count(i)) continue;
                REQUIRE(obj.ledger.entries[i] == prev.entries[i]);
                if (obj.ledger.superseded.count(i)) {
                    const auto target = supersession_target(prev.entries[i]);
                    REQUIRE(target);
                    bool overridden = false;
                    for (std::size_t j = prev.entries.size(); j < obj.ledger.entries.size(); ++j)
                        overridden = overridden || supersession_target(obj.ledger.entries[j]) == target;
                    CHECK(overridden);
                }
            }
            CHECK(obj.ledger.superseded.size() <= obj.ledger.entries.size());
            if (obj.coding_gate_triggered)
                for (const auto& m : obj.markers) CHECK(params_complete(m.marker, m.params));
            CHECK(extract_markers(text, vocab()).size() == obj.markers.size());
            nlohmann::json a = nlohmann::json::array(), b = nlohmann::json::array();
            for (const auto& m : extract_markers(text, vocab())) a.push_back(m.to_json());
            for (const auto& m : obj.markers) b.push_back(m.to_json());
            CHECK(a.dump() == b.dump());
            prev = obj.ledger;
        }
    }
}

TEST_CASE("ledger json round trip") {
    ModificationLedger l;
    l.append({2, MarkerKind::SetpointAdjustment, {{"device", "slack"}, {"v", 1.05}}});
    l.append({3, MarkerKind::SetpointAdjustment, {{"device", "slack"}, {"v", 1.02}}});
    l.append({3, MarkerKind::LoadScaling, {{"factor", 1.1}}});
    CHECK(ModificationLedger::from_json(l.to_json()) == l);
}
