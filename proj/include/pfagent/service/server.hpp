#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "json.hpp"
#include "pfagent/agent/session.hpp"
#include "pfagent/evolution/evolution.hpp"
#include "pfagent/reporting/log.hpp"

namespace httplib {
class Server;
}

namespace pfagent::service {

using nlohmann::json;

struct ServiceOptions {
    std::filesystem::path root;                          // sessions/<id>/ and events.ndjson live here
    std::optional<std::filesystem::path> profile_path;   // evolution profile shared by all sessions
    agent::AgentConfig config;
    std::shared_ptr<const agent::AgentResources> resources;   // loaded when null
    /// Provider for a new session; defaults to agent::make_provider.
    std::function<std::shared_ptr<execution::CompletionProvider>(const agent::AgentConfig&)> provider_factory;
};

/// Status code and body of one API call.
struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Session registry and request handlers behind /api/v1. The handlers are
/// plain functions of the request so they can be exercised without a socket.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    Response create_session(const std::string& body);
    Response post_message(const std::string& id, const std::string& body);
    Response post_execute(const std::string& id, const std::string& body);
    Response post_fix(const std::string& id, const std::string& body);
    Response post_feedback(const std::string& id, const std::string& body);
    Response get_session(const std::string& id) const;
    Response get_log(const std::string& id) const;
    Response get_plot(const std::string& id, const std::string& name) const;
    Response get_config() const;
    Response put_config(const std::string& body);

    /// Register every route on `server`.
    void mount(httplib::Server& server);

    std::size_t session_count() const;
    agent::AgentConfig config() const;

private:
    std::shared_ptr<agent::Session> find(const std::string& id) const;
    json handle_json(const std::string& id, const agent::Session& s) const;
    std::string new_id();

    ServiceOptions opts_;
    std::unique_ptr<evolution::ProfileStore> store_;
    std::unique_ptr<reporting::GlobalEventStream> events_;

    mutable std::shared_mutex config_mu_;
    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<agent::Session>> sessions_;
    std::map<std::string, std::string> created_at_;
    std::uint64_t id_state_;
};

/// HTTP status for an error kind.
int status_for(const std::string& error_kind);

/// Blocks serving /api/v1 on host:port. Returns false when the address
/// cannot be bound.
bool serve(Service& service, const std::string& host, int port);

}  // namespace pfagent::service
