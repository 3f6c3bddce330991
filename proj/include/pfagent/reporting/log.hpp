#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace pfagent::reporting {

using nlohmann::json;

enum class EventKind { Turn, Generation, StaticCheck, Execution, Fix, Feedback, ProfileUpdate };

std::string to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(const std::string& s);

struct Event {
    std::uint64_t seq = 0;
    std::string timestamp;   // UTC, millisecond resolution
    EventKind kind = EventKind::Turn;
    json payload = json::object();

    json to_json() const;
    static Event from_json(const json& j);
};

/// Receives a copy of every session event. One consumer thread drains an
/// in-memory queue into a newline-delimited file, so many sessions can
/// append at once.
class GlobalEventStream {
public:
    explicit GlobalEventStream(std::filesystem::path path);
    ~GlobalEventStream();
    GlobalEventStream(const GlobalEventStream&) = delete;
    GlobalEventStream& operator=(const GlobalEventStream&) = delete;

    void publish(const std::string& session_id, const Event& e);
    /// Block until every published event has been written (or failed).
    void flush();
    const std::filesystem::path& path() const { return path_; }
    std::size_t write_failures() const;

private:
    void run();

    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable drained_;
    std::deque<std::string> queue_;
    std::size_t in_flight_ = 0;
    std::size_t failures_ = 0;
    bool stop_ = false;
    std::thread worker_;
};

/// Append-only per-session event log, mirrored to `session_log.json`.
/// Disk errors never stop the session: the log stays in memory and the
/// failure is reported through `persistence_error()`.
class SessionLog {
public:
    SessionLog(std::string session_id, std::optional<std::filesystem::path> file,
               GlobalEventStream* global = nullptr);

    const Event& append(EventKind kind, json payload);

    const std::string& session_id() const { return session_id_; }
    const std::string& created_at() const { return created_at_; }
    std::vector<Event> events() const;
    std::vector<Event> events_of(EventKind kind) const;
    std::size_t size() const;
    json to_json() const;
    /// Last persistence failure message, if the most recent write failed.
    std::optional<std::string> persistence_error() const;

private:
    void persist_locked();

    std::string session_id_;
    std::string created_at_;
    std::optional<std::filesystem::path> file_;
    GlobalEventStream* global_;
    mutable std::mutex mu_;
    std::vector<Event> events_;
    std::uint64_t next_seq_ = 1;
    std::int64_t last_ms_ = 0;
    std::optional<std::string> persistence_error_;
};

/// Read a persisted session log document.
json load_session_log(const std::filesystem::path& file);

/// UTC timestamp with millisecond resolution for `ms` since the epoch.
std::string format_timestamp(std::int64_t ms);

}  // namespace pfagent::reporting
