// Command-line front end: benchmark generation and runs, profile evolution,
// the HTTP service, fix requests against a running service and a local chat.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "httplib.h"
#include "pfagent/agent/session.hpp"
#include "pfagent/bench/runner.hpp"
#include "pfagent/evolution/evolution.hpp"
#include "pfagent/service/server.hpp"
#include "pfagent/util/files.hpp"

using namespace pfagent;
using nlohmann::json;

namespace {

agent::AgentMode parse_mode(const std::string& s) {
    const auto m = agent::mode_from_string(s);
    if (!m) throw Error("InvalidArgument", "unknown mode '" + s + "'");
    return *m;
}

/// Config file (same shape as GET /config) overlaid with the mode flag.
agent::AgentConfig load_config(const std::string& config_file, const std::string& mode) {
    agent::AgentConfig cfg;
    if (!config_file.empty()) cfg.update_from_json(json::parse(util::read_file(config_file)));
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    return cfg;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    util::write_file_atomic(path, text);
}

int bench_gen(int n, std::uint64_t seed, bool expanded, const std::string& out) {
    bench::SuiteOptions o = expanded ? bench::expanded_suite_options(seed) : bench::SuiteOptions{};
    o.seed = seed;
    if (n > 0) o.n_scenarios = n;
    const auto suite = bench::generate_suite(o);
    write_output(out, suite.dump());
    spdlog::info("wrote {} scenarios", suite.scenarios.size());
    return 0;
}

struct RunArgs {
    std::string suite, mode = "template-gate", report, workspace = "bench_workspace", profile, config;
    std::optional<int> drop_from;
    bool misuse = false;
};

int bench_run(const RunArgs& a) {
    const auto suite = bench::load_suite(a.suite);
    bench::RunOptions ro;
    ro.config = load_config(a.config, a.mode);
    if (a.drop_from) ro.config.simulated.drop_ledger_from_turn = *a.drop_from;
    ro.config.simulated.misuse_line_outage = ro.config.simulated.misuse_line_outage || a.misuse;
    ro.workspace_root = a.workspace;
    if (!a.profile.empty()) ro.profile_path = a.profile;
    std::size_t done = 0;
    ro.on_scenario = [&](const bench::ScenarioResult& r) {
        ++done;
        spdlog::info("[{}/{}] {} {} {:.2f}", done, suite.scenarios.size(), r.scenario_id,
                     r.invalid ? "INVALID" : (r.pass ? "PASS" : "FAIL"), r.conversation_score);
    };
    const auto report = bench::run_benchmark(suite, ro);
    write_output(a.report, report.to_json().dump(1) + "\n");
    std::cout << bench::format_report_table(report);
    return 0;
}

int bench_report(const std::string& in, const std::string& format) {
    const auto report = bench::SuiteReport::from_json(json::parse(util::read_file(in)));
    if (format == "json") std::cout << report.to_json().dump(1) << "\n";
    else std::cout << bench::format_report_table(report);
    return 0;
}

int evolve(const std::string& report_file, const std::string& profile, bool apply_queue) {
    const auto res = agent::AgentResources::load_default();
    const evolution::ProfileStore store(profile);
    evolution::EvolutionProfile p = store.load();
    if (!report_file.empty()) {
        const auto report = bench::SuiteReport::from_json(json::parse(util::read_file(report_file)));
        p = bench::evolve_from_report(report, store, res->signatures, res->packs);
    }
    if (apply_queue) p = store.apply_queue(res->signatures, res->packs);
    std::cout << p.to_json().dump(1) << "\n";
    return 0;
}

int profile_merge(const std::string& a, const std::string& b, const std::string& out) {
    const auto pa = evolution::EvolutionProfile::from_json(json::parse(util::read_file(a)));
    const auto pb = evolution::EvolutionProfile::from_json(json::parse(util::read_file(b)));
    write_output(out, evolution::merge_profiles(pa, pb).to_json().dump(1) + "\n");
    return 0;
}

int fix(const std::string& server, const std::string& session, int turn) {
    httplib::Client client(server);
    client.set_read_timeout(600, 0);
    const auto r = client.Post("/api/v1/sessions/" + session + "/fix", json{{"turn", turn}}.dump(), "application/json");
    if (!r) {
        std::cerr << "cannot reach " << server << ": " << httplib::to_string(r.error()) << "\n";
        return 2;
    }
    std::cout << r->body << "\n";
    return r->status == 200 ? 0 : 1;
}

int serve(const std::string& host, int port, const std::string& root, const std::string& profile,
          const std::string& config, const std::string& mode) {
    service::ServiceOptions o;
    o.root = root;
    if (!profile.empty()) o.profile_path = profile;
    o.config = load_config(config, mode);
    service::Service svc(std::move(o));
    if (!service::serve(svc, host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << "\n";
        return 2;
    }
    return 0;
}

/// One session on stdin/stdout. Lines starting with ':' are commands.
int chat(const std::string& workspace, const std::string& profile, const std::string& config, const std::string& mode) {
    const auto cfg = load_config(config, mode);
    std::unique_ptr<evolution::ProfileStore> store;
    if (!profile.empty()) store = std::make_unique<evolution::ProfileStore>(profile);
    agent::Session s("chat", workspace, cfg, agent::AgentResources::load_default(), agent::make_provider(cfg),
                     store.get());
    std::cout << "mode " << agent::to_string(cfg.mode) << ", workspace " << workspace
              << "\n:fix <turn>, :feedback <turn> <text>, :quit\n";
    std::string line;
    while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
        if (line.empty()) continue;
        try {
            if (line == ":quit") break;
            if (line.rfind(":fix ", 0) == 0) {
                std::cout << s.fix(std::stoi(line.substr(5))).outcome.to_json().dump(1) << "\n";
                continue;
            }
            if (line.rfind(":feedback ", 0) == 0) {
                const auto rest = line.substr(10);
                const auto sp = rest.find(' ');
                std::cout << s.feedback(std::stoi(rest.substr(0, sp)), sp == std::string::npos ? "" : rest.substr(sp + 1),
                                        std::nullopt)
                                 .dump()
                          << "\n";
                continue;
            }
            const auto rep = s.handle_turn(line);
            std::cout << "[" << reporting::to_string(rep.status) << "] " << rep.summary << "\n";
            if (!rep.code.empty()) std::cout << "```python\n" << rep.code << "```\n";
            if (!rep.log_excerpt.empty() && rep.status != reporting::TurnStatus::Success)
                std::cout << rep.log_excerpt << "\n";
        } catch (const Error& e) {
            std::cout << "error (" << e.kind() << "): " << e.what() << "\n";
        } catch (const std::exception& e) {
            std::cout << "error: " << e.what() << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conversational power-flow agent"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    auto* bench_cmd = app.add_subcommand("bench", "Benchmark suites");
    bench_cmd->require_subcommand(1);

    auto* gen = bench_cmd->add_subcommand("gen", "Generate a scenario suite");
    int n = 0;
    std::uint64_t seed = 7;
    bool expanded = false;
    std::string out = "-";
    gen->add_option("--n", n, "Number of scenarios (default 100, 164 expanded)");
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_flag("--expanded", expanded, "Add N-1 and islanding tasks");
    gen->add_option("--out", out, "Output file, '-' for stdout");

    auto* run = bench_cmd->add_subcommand("run", "Run a suite and score it");
    RunArgs ra;
    int drop = 0;
    run->add_option("--suite", ra.suite, "Suite file")->required()->check(CLI::ExistingFile);
    run->add_option("--mode", ra.mode, "base, fine-tuned, rag, fine-tuned-rag, mock or template-gate");
    run->add_option("--report", ra.report, "Report file")->required();
    run->add_option("--workspace", ra.workspace, "Root of the per-scenario workspaces");
    run->add_option("--profile", ra.profile, "Evolution profile to apply");
    run->add_option("--config", ra.config, "Agent config JSON")->check(CLI::ExistingFile);
    auto* drop_opt = run->add_option("--drop-ledger-from-turn", drop, "Mock mode: forget earlier changes from turn N");
    run->add_flag("--misuse-line-outage", ra.misuse, "Mock mode: write line status by position");

    auto* rep = bench_cmd->add_subcommand("report", "Print a saved report");
    std::string in, format = "table";
    rep->add_option("--in", in, "Report file")->required()->check(CLI::ExistingFile);
    rep->add_option("--format", format, "table or json")->check(CLI::IsMember({"table", "json"}));

    auto* ev = app.add_subcommand("evolve", "Fold benchmark failures or queued feedback into a profile");
    std::string ev_report, ev_profile;
    bool apply_queue = false;
    ev->add_option("--report", ev_report, "Benchmark report")->check(CLI::ExistingFile);
    ev->add_option("--profile", ev_profile, "Profile file")->required();
    ev->add_flag("--apply-queue", apply_queue, "Also fold queued deployment feedback");

    auto* prof = app.add_subcommand("profile", "Profile utilities");
    prof->require_subcommand(1);
    auto* merge = prof->add_subcommand("merge", "Merge two profiles");
    std::string pa, pb, pout = "-";
    merge->add_option("a", pa, "First profile")->required()->check(CLI::ExistingFile);
    merge->add_option("b", pb, "Second profile")->required()->check(CLI::ExistingFile);
    merge->add_option("--out", pout, "Output file, '-' for stdout");

    auto* fx = app.add_subcommand("fix", "Ask a running service to repair a failed turn");
    std::string server = "http://127.0.0.1:8080", session;
    int turn = 0;
    fx->add_option("--server", server, "Service base URL");
    fx->add_option("--session", session, "Session id")->required();
    fx->add_option("--turn", turn, "Turn index")->required();

    auto* sv = app.add_subcommand("serve", "Serve the HTTP API under /api/v1");
    std::string host = "127.0.0.1", root = "pfagent_data", sv_profile, config, mode;
    int port = 8080;
    sv->add_option("--host", host);
    sv->add_option("--port", port);
    sv->add_option("--root", root, "Directory for session workspaces and the event stream");
    sv->add_option("--profile", sv_profile, "Evolution profile shared by all sessions");
    sv->add_option("--config", config, "Agent config JSON")->check(CLI::ExistingFile);
    sv->add_option("--mode", mode, "Initial mode");

    auto* ch = app.add_subcommand("chat", "Interactive session on the terminal");
    std::string workspace = "chat_workspace";
    ch->add_option("--workspace", workspace);
    ch->add_option("--profile", sv_profile);
    ch->add_option("--config", config)->check(CLI::ExistingFile);
    ch->add_option("--mode", mode);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*gen) return bench_gen(n, seed, expanded, out);
        if (*run) {
            if (drop_opt->count()) ra.drop_from = drop;
            return bench_run(ra);
        }
        if (*rep) return bench_report(in, format);
        if (*ev) return evolve(ev_report, ev_profile, apply_queue);
        if (*merge) return profile_merge(pa, pb, pout);
        if (*fx) return fix(server, session, turn);
        if (*sv) return serve(host, port, root, sv_profile, config, mode);
        if (*ch) return chat(workspace, sv_profile, config, mode);
    } catch (const Error& e) {
        std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
