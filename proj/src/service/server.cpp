#include "pfagent/service/server.hpp"

#include <chrono>
#include <random>
#include <regex>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "pfagent/util/files.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::service {

namespace {

namespace fs = std::filesystem;

Response json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

Response error_response(const std::string& kind, const std::string& message) {
    return json_response(status_for(kind), {{"error", {{"kind", kind}, {"message", message}}}});
}

/// Run a handler, turning every error into its HTTP form.
template <class F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        return error_response("MalformedBody", e.what());
    } catch (const Error& e) {
        return error_response(e.kind(), e.what());
    } catch (const std::exception& e) {
        spdlog::error("request failed: {}", e.what());
        return error_response("Internal", e.what());
    }
}

json parse_body(const std::string& body) {
    if (util::trim(body).empty()) return json::object();
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw Error("MalformedBody", std::string("body is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("MalformedBody", "body must be a JSON object");
    return j;
}

template <class T>
T field(const json& j, const char* name) {
    if (!j.contains(name)) throw Error("MalformedBody", std::string("missing field '") + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw Error("MalformedBody", std::string("field '") + name + "' has the wrong type");
    }
}

// Plain names only: no directories, no hidden files.
bool safe_name(const std::string& name) {
    static const std::regex re("^[A-Za-z0-9_][A-Za-z0-9_.-]*$");
    return name.size() <= 128 && std::regex_match(name, re) && name.find("..") == std::string::npos;
}

std::optional<std::string> image_type(const std::string& name) {
    static const std::map<std::string, std::string> types{
        {".png", "image/png"}, {".svg", "image/svg+xml"}, {".jpg", "image/jpeg"},
        {".jpeg", "image/jpeg"}, {".pdf", "application/pdf"}};
    const auto it = types.find(util::to_lower(fs::path(name).extension().string()));
    if (it == types.end()) return std::nullopt;
    return it->second;
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

int status_for(const std::string& kind) {
    if (kind == "UnknownSession" || kind == "UnknownPlot" || kind == "UnknownTurn") return 404;
    if (kind == "Busy") return 409;
    if (kind == "MalformedBody" || kind == "NothingToFix" || kind == "EmptyIssue" || kind == "EmptyCode" ||
        kind == "InvalidConfig" || kind == "InvalidFile")
        return 422;
    if (kind == "ProviderError" || kind == "NoProvider") return 502;
    return 500;
}

Service::Service(ServiceOptions options) : opts_(std::move(options)) {
    if (!opts_.resources) opts_.resources = agent::AgentResources::load_default();
    if (!opts_.provider_factory) opts_.provider_factory = agent::make_provider;
    fs::create_directories(opts_.root / "sessions");
    if (opts_.profile_path) store_ = std::make_unique<evolution::ProfileStore>(*opts_.profile_path);
    events_ = std::make_unique<reporting::GlobalEventStream>(opts_.root / "events.ndjson");
    id_state_ = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ static_cast<std::uint64_t>(now_ms());
}

Service::~Service() {
    if (events_) events_->flush();
}

std::string Service::new_id() {
    // caller holds sessions_mu_
    std::mt19937_64 rng(id_state_);
    for (;;) {
        id_state_ = rng();
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_state_));
        std::string id = std::string("s") + std::string(buf).substr(0, 12);
        if (!sessions_.count(id) && !fs::exists(opts_.root / "sessions" / id)) return id;
    }
}

std::shared_ptr<agent::Session> Service::find(const std::string& id) const {
    std::lock_guard lock(sessions_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error("UnknownSession", "no session '" + id + "'");
    return it->second;
}

json Service::handle_json(const std::string& id, const agent::Session& s) const {
    const auto active = s.active_case();
    std::string created;
    {
        std::lock_guard lock(sessions_mu_);
        created = created_at_.at(id);
    }
    return {{"session_id", id},
            {"created_at", created},
            {"active_case", active ? active->to_json() : json(nullptr)},
            {"mode", agent::to_string(s.config().mode)},
            {"workspace", s.workspace().string()}};
}

std::size_t Service::session_count() const {
    std::lock_guard lock(sessions_mu_);
    return sessions_.size();
}

agent::AgentConfig Service::config() const {
    std::shared_lock lock(config_mu_);
    return opts_.config;
}

Response Service::create_session(const std::string& body) {
    return guarded([&] {
        const json req = parse_body(body);
        agent::AgentConfig cfg = config();
        if (req.contains("mode")) cfg.update_from_json({{"mode", req["mode"]}});
        auto provider = opts_.provider_factory(cfg);

        std::string id;
        std::shared_ptr<agent::Session> session;
        {
            std::lock_guard lock(sessions_mu_);
            id = new_id();
            session = std::make_shared<agent::Session>(id, opts_.root / "sessions" / id, cfg, opts_.resources,
                                                       std::move(provider), store_.get(), events_.get());
            sessions_.emplace(id, session);
            created_at_.emplace(id, reporting::format_timestamp(now_ms()));
        }
        spdlog::info("session {} created ({})", id, agent::to_string(cfg.mode));
        return json_response(201, handle_json(id, *session));
    });
}

Response Service::get_session(const std::string& id) const {
    return guarded([&] {
        const auto s = find(id);
        return json_response(200, handle_json(id, *s));
    });
}

Response Service::post_message(const std::string& id, const std::string& body) {
    return guarded([&] {
        const auto s = find(id);
        const json req = parse_body(body);
        const auto text = field<std::string>(req, "text");
        std::vector<std::pair<std::string, std::string>> files;
        if (req.contains("files")) {
            if (!req["files"].is_array()) throw Error("MalformedBody", "'files' must be an array");
            for (const auto& f : req["files"]) {
                if (!f.is_object()) throw Error("MalformedBody", "each file needs a name and content");
                auto name = field<std::string>(f, "name");
                if (!safe_name(name)) throw Error("InvalidFile", "file name '" + name + "' is not allowed");
                files.emplace_back(std::move(name), field<std::string>(f, "content"));
            }
        }
        std::vector<std::string> names;
        for (const auto& [name, content] : files) {
            util::write_file_atomic(s->workspace() / name, content);
            names.push_back(name);
        }
        return json_response(200, s->handle_turn(text, names).to_json());
    });
}

Response Service::post_execute(const std::string& id, const std::string& body) {
    return guarded([&] {
        const auto s = find(id);
        const json req = parse_body(body);
        return json_response(200, s->execute_code(field<std::string>(req, "code")).to_json());
    });
}

Response Service::post_fix(const std::string& id, const std::string& body) {
    return guarded([&] {
        const auto s = find(id);
        const json req = parse_body(body);
        const auto r = s->fix(field<int>(req, "turn"));
        json out = r.outcome.to_json();
        out["fix_id"] = r.event.fix_id;
        out["note"] = r.event.note ? json(*r.event.note) : json(nullptr);
        out["queued_signatures"] = r.event.queued_signatures;
        return json_response(200, out);
    });
}

Response Service::post_feedback(const std::string& id, const std::string& body) {
    return guarded([&] {
        const auto s = find(id);
        const json req = parse_body(body);
        std::optional<std::string> cause;
        if (req.contains("root_cause") && !req["root_cause"].is_null()) cause = field<std::string>(req, "root_cause");
        return json_response(201, s->feedback(field<int>(req, "turn"), field<std::string>(req, "issue_text"), cause));
    });
}

Response Service::get_log(const std::string& id) const {
    return guarded([&] { return json_response(200, find(id)->log().to_json()); });
}

Response Service::get_plot(const std::string& id, const std::string& name) const {
    return guarded([&] {
        const auto s = find(id);
        const auto type = image_type(name);
        const fs::path file = s->workspace() / name;
        if (!safe_name(name) || !type || !fs::is_regular_file(file))
            throw Error("UnknownPlot", "no plot '" + name + "' in session " + id);
        return Response{200, *type, util::read_file(file)};
    });
}

Response Service::get_config() const {
    return guarded([&] { return json_response(200, config().to_json()); });
}

Response Service::put_config(const std::string& body) {
    return guarded([&] {
        const json req = parse_body(body);
        std::unique_lock lock(config_mu_);
        agent::AgentConfig next = opts_.config;
        next.update_from_json(req);   // all or nothing
        opts_.config = std::move(next);
        return json_response(200, opts_.config.to_json());
    });
}

void Service::mount(httplib::Server& server) {
    const auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    const std::string sid = "/api/v1/sessions/([A-Za-z0-9_-]+)";
    server.Post("/api/v1/sessions",
                [=, this](const httplib::Request& q, httplib::Response& res) { reply(res, create_session(q.body)); });
    server.Get(sid, [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, get_session(q.matches[1]));
    });
    server.Post(sid + "/messages", [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, post_message(q.matches[1], q.body));
    });
    server.Post(sid + "/execute", [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, post_execute(q.matches[1], q.body));
    });
    server.Post(sid + "/fix", [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, post_fix(q.matches[1], q.body));
    });
    server.Post(sid + "/feedback", [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, post_feedback(q.matches[1], q.body));
    });
    server.Get(sid + "/log", [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, get_log(q.matches[1]));
    });
    server.Get(sid + "/plots/([^/]+)", [=, this](const httplib::Request& q, httplib::Response& res) {
        reply(res, get_plot(q.matches[1], q.matches[2]));
    });
    server.Get("/api/v1/config",
               [=, this](const httplib::Request&, httplib::Response& res) { reply(res, get_config()); });
    server.Put("/api/v1/config",
               [=, this](const httplib::Request& q, httplib::Response& res) { reply(res, put_config(q.body)); });
}

bool serve(Service& service, const std::string& host, int port) {
    httplib::Server server;
    service.mount(server);
    spdlog::info("listening on http://{}:{}/api/v1", host, port);
    return server.listen(host, port);
}

}  // namespace pfagent::service
