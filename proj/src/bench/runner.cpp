#include "pfagent/bench/runner.hpp"

#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pfagent/util/text.hpp"

namespace pfagent::bench {

using nlohmann::json;

namespace {

const char* const kDimensions[] = {"format", "grounding", "continuity", "execution", "semantic", "artifact"};

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> ratio(long long num, long long den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

double dimension_value(const TurnScore& s, const std::string& d) {
    if (d == "format") return s.s_fmt;
    if (d == "grounding") return s.s_gnd;
    if (d == "continuity") return s.s_cont;
    if (d == "execution") return s.s_exec;
    if (d == "semantic") return s.s_sem;
    return s.s_art;
}

TurnResult run_turn(agent::Session& session, const ScenarioSpec& spec, const ScenarioTurn& turn,
                    OracleCache& cache, const std::vector<std::string>& attached) {
    TurnResult tr;
    tr.turn_index = turn.turn_index;
    tr.task = to_string(turn.op.task);
    tr.prompt = turn.prompt;

    TurnTranscript transcript;
    try {
        const auto report = session.handle_turn(turn.prompt, attached);
        tr.status = reporting::to_string(report.status);
        if (const auto rec = session.turn(report.turn_index)) {
            if (rec->script) {
                transcript.response_text = rec->script->raw_response;
                transcript.code = rec->script->code;
            }
            transcript.execution = rec->execution;
            if (rec->execution && !rec->execution->ok())
                tr.error_excerpt = util::tail_lines(rec->execution->stderr_text, 8);
            else if (!report.error_class.empty())
                tr.error_excerpt = report.error_class + ": " + report.summary;
        }
    } catch (const execution::ProviderError& e) {
        // a provider failure is the mode's failure, not the harness's
        tr.status = "ProviderError";
        tr.error_excerpt = e.what();
    }
    tr.score = score_turn(transcript, turn, cache.get(spec, turn.turn_index));
    return tr;
}

}  // namespace

json TurnResult::to_json() const {
    return {{"turn", turn_index}, {"task", task},     {"prompt", prompt},
            {"score", score.to_json()}, {"status", status}, {"error_excerpt", error_excerpt}};
}

TurnResult TurnResult::from_json(const json& j) {
    TurnResult t;
    t.turn_index = j.at("turn").get<int>();
    t.task = j.value("task", "");
    t.prompt = j.value("prompt", "");
    t.score = TurnScore::from_json(j.at("score"));
    t.status = j.value("status", "");
    t.error_excerpt = j.value("error_excerpt", "");
    return t;
}

json ScenarioResult::to_json() const {
    json t = json::array();
    for (const auto& x : turns) t.push_back(x.to_json());
    return {{"scenario_id", scenario_id},
            {"family", family},
            {"source", source},
            {"turns", t},
            {"conversation_score", conversation_score},
            {"pass", pass},
            {"invalid", invalid},
            {"invalid_reason", invalid_reason}};
}

ScenarioResult ScenarioResult::from_json(const json& j) {
    ScenarioResult s;
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.family = j.value("family", "");
    s.source = j.value("source", "");
    for (const auto& t : j.at("turns")) s.turns.push_back(TurnResult::from_json(t));
    s.conversation_score = j.value("conversation_score", 0.0);
    s.pass = j.value("pass", false);
    s.invalid = j.value("invalid", false);
    s.invalid_reason = j.value("invalid_reason", "");
    return s;
}

void SuiteReport::aggregate() {
    long long valid = 0, passed = 0;
    std::vector<long long> turn_pass(3, 0), turn_n(3, 0);
    std::map<std::string, std::pair<long long, long long>> fam, cell;
    std::map<std::string, std::pair<double, long long>> dims;
    double score_sum = 0.0;
    failure_category_histogram.clear();
    invalid_scenarios.clear();
    for (const char* d : kDimensions) failure_category_histogram[d] = 0;

    for (const auto& s : per_scenario_scores) {
        if (s.invalid) {
            invalid_scenarios.push_back(s.scenario_id);
            continue;
        }
        ++valid;
        passed += s.pass ? 1 : 0;
        score_sum += s.conversation_score;
        auto& f = fam[s.family];
        auto& c = cell[s.family + "/" + s.source];
        ++f.second;
        ++c.second;
        f.first += s.pass ? 1 : 0;
        c.first += s.pass ? 1 : 0;
        for (const auto& t : s.turns) {
            if (t.turn_index >= 1 && t.turn_index <= 3) {
                ++turn_n[t.turn_index - 1];
                turn_pass[t.turn_index - 1] += t.score.pass ? 1 : 0;
            }
            for (const char* d : kDimensions) {
                auto& acc = dims[d];
                acc.first += dimension_value(t.score, d);
                ++acc.second;
            }
            for (const auto& cat : t.score.failure_categories) ++failure_category_histogram[cat];
        }
    }
    scenario_pass_rate = ratio(passed, valid);
    per_turn_pass_rates.assign(3, std::nullopt);
    for (int i = 0; i < 3; ++i) per_turn_pass_rates[i] = ratio(turn_pass[i], turn_n[i]);
    per_family_pass_rates.clear();
    per_cell_pass_rates.clear();
    for (const auto& [k, v] : fam) per_family_pass_rates[k] = ratio(v.first, v.second);
    for (const auto& [k, v] : cell) per_cell_pass_rates[k] = ratio(v.first, v.second);
    dimension_averages.clear();
    for (const char* d : kDimensions) {
        const auto it = dims.find(d);
        dimension_averages[d] = it == dims.end() || it->second.second == 0
                                    ? std::nullopt
                                    : std::optional<double>(it->second.first / static_cast<double>(it->second.second));
    }
    mean_conversation_score = valid == 0 ? std::nullopt : std::optional<double>(score_sum / static_cast<double>(valid));
}

json SuiteReport::to_json() const {
    json scen = json::array();
    for (const auto& s : per_scenario_scores) scen.push_back(s.to_json());
    json turns = json::array();
    for (const auto& t : per_turn_pass_rates) turns.push_back(opt(t));
    json fam = json::object(), cell = json::object(), dims = json::object();
    for (const auto& [k, v] : per_family_pass_rates) fam[k] = opt(v);
    for (const auto& [k, v] : per_cell_pass_rates) cell[k] = opt(v);
    for (const auto& [k, v] : dimension_averages) dims[k] = opt(v);
    return {{"mode", mode},
            {"per_scenario_scores", scen},
            {"scenario_pass_rate", opt(scenario_pass_rate)},
            {"per_turn_pass_rates", turns},
            {"per_family_pass_rates", fam},
            {"per_cell_pass_rates", cell},
            {"dimension_averages", dims},
            {"failure_category_histogram", failure_category_histogram},
            {"mean_conversation_score", opt(mean_conversation_score)},
            {"invalid_scenarios", invalid_scenarios}};
}

SuiteReport SuiteReport::from_json(const json& j) {
    SuiteReport r;
    try {
        r.mode = j.at("mode").get<std::string>();
        for (const auto& s : j.at("per_scenario_scores")) r.per_scenario_scores.push_back(ScenarioResult::from_json(s));
    } catch (const json::exception& e) {
        throw Error("InvalidReport", e.what());
    }
    r.aggregate();
    return r;
}

SuiteReport run_benchmark(const Suite& suite, const RunOptions& options) {
    SuiteReport report;
    report.mode = agent::to_string(options.config.mode);
    const auto resources = options.resources ? options.resources : agent::AgentResources::load_default();
    OracleCache own_cache;
    OracleCache& cache = options.oracle_cache ? *options.oracle_cache : own_cache;
    std::optional<evolution::ProfileStore> store;
    if (options.profile_path) store.emplace(*options.profile_path);
    std::filesystem::create_directories(options.workspace_root);

    for (const auto& spec : suite.scenarios) {
        ScenarioResult sr;
        sr.scenario_id = spec.scenario_id;
        sr.family = intent::to_string(spec.family);
        sr.source = intent::to_string(spec.source);
        try {
            const auto ws = options.workspace_root / spec.scenario_id;
            std::filesystem::remove_all(ws);
            std::filesystem::create_directories(ws);
            materialize_upload(spec, ws);
            auto provider = options.provider_factory ? options.provider_factory(spec) : agent::make_provider(options.config);
            agent::Session session(spec.scenario_id, ws, options.config, resources, provider,
                                   store ? &*store : nullptr, nullptr);
            double sum = 0.0;
            bool all = true;
            for (const auto& turn : spec.turns) {
                std::vector<std::string> attached;
                if (turn.turn_index == 1 && spec.upload) attached.push_back(spec.upload->file_name);
                sr.turns.push_back(run_turn(session, spec, turn, cache, attached));
                sum += sr.turns.back().score.total;
                all = all && sr.turns.back().score.pass;
            }
            sr.conversation_score = sum / static_cast<double>(sr.turns.size());
            sr.pass = all;
        } catch (const std::exception& e) {
            sr.invalid = true;
            sr.invalid_reason = e.what();
            spdlog::warn("scenario {} aborted and excluded from rates: {}", spec.scenario_id, e.what());
        }
        if (options.on_scenario) options.on_scenario(sr);
        report.per_scenario_scores.push_back(std::move(sr));
    }
    report.aggregate();
    return report;
}

std::vector<evolution::FailureRecord> failure_records(const SuiteReport& report) {
    std::vector<evolution::FailureRecord> out;
    for (const auto& s : report.per_scenario_scores) {
        if (s.invalid) continue;
        for (const auto& t : s.turns) {
            if (t.score.pass) continue;
            evolution::FailureRecord r;
            r.origin = evolution::FailureOrigin::Benchmark;
            r.prompt_text = t.prompt;
            if (!t.error_excerpt.empty()) r.error_text = t.error_excerpt;
            r.failed_dimensions = t.score.failure_categories;
            r.scenario_id = s.scenario_id;
            r.turn_index = t.turn_index;
            out.push_back(std::move(r));
        }
    }
    return out;
}

evolution::EvolutionProfile evolve_from_report(const SuiteReport& report, const evolution::ProfileStore& store,
                                               const evolution::SignatureLibrary& library,
                                               const evolution::PackRegistry& packs) {
    const auto activations = evolution::attribute_failures(failure_records(report), library);
    return store.update([&](const evolution::EvolutionProfile& p) {
        return evolution::update_profile(p, activations, library, packs);
    });
}

std::string format_report_table(const SuiteReport& r) {
    const auto pct = [](const std::optional<double>& v) {
        if (!v) return std::string("n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f%%", *v * 100.0);
        return std::string(buf);
    };
    const auto fix = [](const std::optional<double>& v, int prec) {
        if (!v) return std::string("n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
        return std::string(buf);
    };
    std::ostringstream out;
    const std::size_t valid = r.per_scenario_scores.size() - r.invalid_scenarios.size();
    out << "mode: " << r.mode << "\n"
        << "scenarios: " << valid << " valid, " << r.invalid_scenarios.size() << " invalid\n"
        << "scenario pass rate: " << pct(r.scenario_pass_rate) << "\n"
        << "mean conversation score: " << fix(r.mean_conversation_score, 2) << "\n\n"
        << "turn  pass rate\n";
    for (std::size_t i = 0; i < r.per_turn_pass_rates.size(); ++i)
        out << "  " << (i + 1) << "   " << pct(r.per_turn_pass_rates[i]) << "\n";
    out << "\nfamily/source        pass rate\n";
    for (const auto& [k, v] : r.per_cell_pass_rates) {
        std::string name = k;
        name.resize(std::max<std::size_t>(name.size(), 20), ' ');
        out << "  " << name << " " << pct(v) << "\n";
    }
    out << "\ndimension    average  failures\n";
    for (const char* d : kDimensions) {
        std::string name = d;
        name.resize(12, ' ');
        const auto it = r.dimension_averages.find(d);
        const auto h = r.failure_category_histogram.find(d);
        out << "  " << name << " " << fix(it == r.dimension_averages.end() ? std::nullopt : it->second, 2) << "    "
            << (h == r.failure_category_histogram.end() ? 0 : h->second) << "\n";
    }
    if (!r.invalid_scenarios.empty()) out << "\ninvalid: " << util::join(r.invalid_scenarios, ", ") << "\n";
    return out.str();
}

}  // namespace pfagent::bench
