#include "doctest.h"

#include <future>
#include <thread>
#include <utility>

#include "httplib.h"
#include "pfagent/grid/case_data.hpp"
#include "pfagent/service/server.hpp"
#include "pfagent/util/files.hpp"
#include "test_helpers.hpp"

using namespace pfagent;
using namespace pfagent::service;
using nlohmann::json;

namespace {

std::shared_ptr<const agent::AgentResources> resources() {
    static const std::shared_ptr<const agent::AgentResources> r = agent::AgentResources::load_default();
    return r;
}

ServiceOptions options(const std::string& name) {
    ServiceOptions o;
    o.root = testutil::fresh_dir(name);
    o.profile_path = o.root / "profile.json";
    o.resources = resources();
    return o;
}

/// Server on an ephemeral loopback port for the lifetime of the object.
class LiveServer {
public:
    explicit LiveServer(Service& service) {
        service.mount(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LiveServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(120, 0);
        return c;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

json body(const httplib::Result& r) {
    REQUIRE(r);
    return json::parse(r->body);
}

}  // namespace

TEST_CASE("service: status mapping") {
    CHECK(status_for("UnknownSession") == 404);
    CHECK(status_for("UnknownPlot") == 404);
    CHECK(status_for("Busy") == 409);
    CHECK(status_for("MalformedBody") == 422);
    CHECK(status_for("NothingToFix") == 422);
    CHECK(status_for("EmptyIssue") == 422);
    CHECK(status_for("ProviderError") == 502);
    CHECK(status_for("NoProvider") == 502);
    CHECK(status_for("Whatever") == 500);
}

TEST_CASE("service: end to end over HTTP") {
    Service svc(options("svc_e2e"));
    LiveServer live(svc);
    auto c = live.client();

    const auto created = c.Post("/api/v1/sessions", "{}", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const json handle = json::parse(created->body);
    const std::string id = handle.at("session_id");
    CHECK(handle.at("mode") == "template-gate");
    CHECK(handle.at("active_case").is_null());
    CHECK(std::filesystem::is_directory(handle.at("workspace").get<std::string>()));
    const std::string base = "/api/v1/sessions/" + id;

    const auto msg = c.Post(base + "/messages", json{{"text", "run power flow on ieee14"}}.dump(), "application/json");
    REQUIRE(msg);
    CHECK(msg->status == 200);
    const json report = json::parse(msg->body);
    CHECK(report.at("status") == "Success");
    CHECK(report.at("result").at("converged") == true);
    CHECK(body(c.Get(base)).at("active_case").at("identifier") == "ieee14");

    // nothing to fix on a successful turn
    const auto nofix = c.Post(base + "/fix", R"({"turn": 1})", "application/json");
    REQUIRE(nofix);
    CHECK(nofix->status == 422);
    CHECK(json::parse(nofix->body).at("error").at("kind") == "NothingToFix");

    const auto plot = c.Post(base + "/messages", json{{"text", "Plot the bus voltage profile."}}.dump(),
                             "application/json");
    REQUIRE(plot);
    const json pr = json::parse(plot->body);
    REQUIRE(pr.at("status") == "Success");
    REQUIRE_FALSE(pr.at("plot_files").empty());
    const std::string png = pr.at("plot_files").at(0);
    const auto img = c.Get(base + "/plots/" + png);
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(img->body.substr(1, 3) == "PNG");
    CHECK(c.Get(base + "/plots/missing.png")->status == 404);
    CHECK(c.Get(base + "/plots/session_log.json")->status == 404);
    CHECK(c.Get(base + "/plots/..%2Fprofile.json")->status == 404);

    const auto fb = c.Post(base + "/feedback",
                           json{{"turn", 2}, {"issue_text", "Wrong axis label"}, {"root_cause", "plot template"}}.dump(),
                           "application/json");
    REQUIRE(fb);
    CHECK(fb->status == 201);
    const json log = body(c.Get(base + "/log"));
    bool seen = false;
    for (const auto& e : log.at("events"))
        if (e.at("kind") == "feedback") seen = e.at("payload").dump().find("plot template") != std::string::npos;
    CHECK(seen);

    // every mutating call left a trace in the log
    std::map<std::string, int> kinds;
    for (const auto& e : log.at("events")) ++kinds[e.at("kind").get<std::string>()];
    CHECK(kinds["turn"] == 2);
    CHECK(kinds["execution"] == 2);
    CHECK(kinds["feedback"] == 1);

    CHECK(c.Get("/api/v1/sessions/nope/log")->status == 404);
    CHECK(c.Post("/api/v1/sessions/nope/messages", R"({"text":"hi"})", "application/json")->status == 404);
}

TEST_CASE("service: malformed bodies and uploads") {
    Service svc(options("svc_bad"));
    const json handle = json::parse(svc.create_session("").body);
    const std::string id = handle.at("session_id");

    CHECK(svc.post_message(id, "not json").status == 422);
    CHECK(svc.post_message(id, "[1,2]").status == 422);
    CHECK(svc.post_message(id, R"({"txt": "x"})").status == 422);
    CHECK(svc.post_message(id, R"({"text": 5})").status == 422);
    CHECK(svc.post_fix(id, R"({"turn": "one"})").status == 422);
    CHECK(svc.post_fix(id, R"({"turn": 3})").status == 404);
    CHECK(svc.post_feedback(id, R"({"turn": 1, "issue_text": "x"})").status == 404);
    CHECK(svc.post_execute(id, R"({"code": ""})").status == 422);
    CHECK(svc.post_message(id, R"({"text": "x", "files": [{"name": "../evil.json", "content": "{}"}]})").status == 422);
    CHECK_FALSE(std::filesystem::exists(handle.at("workspace").get<std::string>() + "/../evil.json"));

    // an uploaded case file becomes the active case
    const auto stock = util::read_file(grid::builtin_case_path("ieee14"));
    const json req = {{"text", "I uploaded my_grid.json. Run a power flow on it."},
                      {"files", {{{"name", "my_grid.json"}, {"content", stock}}}}};
    const auto r = svc.post_message(id, req.dump());
    CHECK(r.status == 200);
    const json rep = json::parse(r.body);
    CHECK(rep.at("status") == "Success");
    CHECK(rep.at("code").get<std::string>().find("my_grid.json") != std::string::npos);
    CHECK(svc.post_feedback(id, R"({"turn": 1, "issue_text": "  "})").status == 422);
}

TEST_CASE("service: execute, fix and provider failure codes") {
    auto o = options("svc_fix");
    o.config.mode = agent::AgentMode::BaseModel;
    int call = 0;
    o.provider_factory = [&call](const agent::AgentConfig&) -> std::shared_ptr<execution::CompletionProvider> {
        if (call++ == 0)
            return std::make_shared<execution::FunctionProvider>(
                [](const std::vector<execution::ChatMessage>&) -> std::string {
                    throw execution::ProviderError("upstream returned 503");
                },
                "down");
        return std::make_shared<execution::ScriptedProvider>(std::vector<std::string>{
            "```python\nimport json\nimport pfsim\nss = pfsim.load(pfsim.get_case(\"ieee14\"))\n"
            "print(\"RESULT_JSON: \" + json.dumps({\"converged\": bool(ss.PFlow.run())}))\n```"});
    };
    Service svc(std::move(o));

    const std::string down = json::parse(svc.create_session("{}").body).at("session_id");
    const auto r = svc.post_message(down, R"({"text": "Load the IEEE 14 bus system and run a power flow."})");
    CHECK(r.status == 502);
    CHECK(json::parse(r.body).at("error").at("message").get<std::string>().find("503") != std::string::npos);

    const std::string id = json::parse(svc.create_session("{}").body).at("session_id");
    const auto bad = svc.post_execute(id, json{{"code", "raise RuntimeError('boom')"}}.dump());
    REQUIRE(bad.status == 200);
    CHECK(json::parse(bad.body).at("status") == "ExecutionFailed");
    const auto fixed = svc.post_fix(id, R"({"turn": 1})");
    REQUIRE(fixed.status == 200);
    const json f = json::parse(fixed.body);
    CHECK(f.at("final") == "Fixed");
    CHECK_FALSE(f.at("fix_id").get<std::string>().empty());
    CHECK(svc.session_count() == 2);
}

TEST_CASE("service: config reads are masked and writes are atomic") {
    Service svc(options("svc_cfg"));
    const json before = json::parse(svc.get_config().body);
    CHECK(before.at("mode") == "template-gate");

    const auto ok = svc.put_config(R"({"mode": "rag", "fix": {"retry_limit": 2}, "provider": {"api_key": "sk-x"}})");
    REQUIRE(ok.status == 200);
    const json after = json::parse(ok.body);
    CHECK(after.at("mode") == "rag");
    CHECK(after.at("fix").at("retry_limit") == 2);
    CHECK(after.dump().find("sk-x") == std::string::npos);
    CHECK(after.at("provider").at("api_key_set") == true);

    const auto bad = svc.put_config(R"({"mode": "fine-tuned", "max_attempts": -1})");
    CHECK(bad.status == 422);
    CHECK(svc.config().mode == agent::AgentMode::Rag);   // nothing applied

    // new sessions take the current mode
    CHECK(json::parse(svc.create_session("{}").body).at("mode") == "rag");
    CHECK(json::parse(svc.create_session(R"({"mode": "mock"})").body).at("mode") == "mock");
    CHECK(svc.create_session(R"({"mode": "nope"})").status == 422);
}

TEST_CASE("service: one turn in flight per session") {
    auto o = options("svc_busy");
    o.config.mode = agent::AgentMode::BaseModel;
    std::promise<void> entered, release;
    auto release_f = release.get_future().share();
    o.provider_factory = [&](const agent::AgentConfig&) -> std::shared_ptr<execution::CompletionProvider> {
        return std::make_shared<execution::FunctionProvider>(
            [&, release_f, first = true](const std::vector<execution::ChatMessage>&) mutable -> std::string {
                if (std::exchange(first, false)) entered.set_value();
                release_f.wait();
                return "```python\nimport json\nimport pfsim\nss = pfsim.load(pfsim.get_case(\"ieee14\"))\n"
                       "print(\"RESULT_JSON: \" + json.dumps({\"converged\": bool(ss.PFlow.run())}))\n```";
            },
            "slow");
    };
    Service svc(std::move(o));
    LiveServer live(svc);
    const std::string id = json::parse(svc.create_session("{}").body).at("session_id");
    const std::string path = "/api/v1/sessions/" + id + "/messages";

    auto first = std::async(std::launch::async, [&] {
        auto c = live.client();
        auto r = c.Post(path, R"({"text": "Load the IEEE 14 bus system and run a power flow."})", "application/json");
        return r ? r->status : -1;
    });
    entered.get_future().wait();
    auto c = live.client();
    const auto second = c.Post(path, R"({"text": "Check the voltages."})", "application/json");
    REQUIRE(second);
    CHECK(second->status == 409);
    CHECK(c.Post("/api/v1/sessions/" + id + "/execute", json{{"code", "print(1)"}}.dump(), "application/json")->status == 409);
    // other sessions are unaffected
    CHECK(c.Get("/api/v1/config")->status == 200);
    release.set_value();
    CHECK(first.get() == 200);
}
