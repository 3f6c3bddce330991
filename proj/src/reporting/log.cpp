#include "pfagent/reporting/log.hpp"

#include <chrono>
#include <ctime>

#include <spdlog/spdlog.h>

#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"

namespace pfagent::reporting {

namespace {

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::Turn: return "turn";
        case EventKind::Generation: return "generation";
        case EventKind::StaticCheck: return "static_check";
        case EventKind::Execution: return "execution";
        case EventKind::Fix: return "fix";
        case EventKind::Feedback: return "feedback";
        case EventKind::ProfileUpdate: return "profile_update";
    }
    return "turn";
}

std::optional<EventKind> event_kind_from_string(const std::string& s) {
    for (auto k : {EventKind::Turn, EventKind::Generation, EventKind::StaticCheck, EventKind::Execution,
                   EventKind::Fix, EventKind::Feedback, EventKind::ProfileUpdate})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

std::string format_timestamp(std::int64_t ms) {
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

json Event::to_json() const {
    return {{"seq", seq}, {"timestamp", timestamp}, {"kind", to_string(kind)}, {"payload", payload}};
}

Event Event::from_json(const json& j) {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp = j.at("timestamp").get<std::string>();
    auto k = event_kind_from_string(j.at("kind").get<std::string>());
    if (!k) throw Error("MalformedLog", "unknown event kind " + j.at("kind").dump());
    e.kind = *k;
    e.payload = j.value("payload", json::object());
    return e;
}

GlobalEventStream::GlobalEventStream(std::filesystem::path path) : path_(std::move(path)) {
    worker_ = std::thread([this] { run(); });
}

GlobalEventStream::~GlobalEventStream() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void GlobalEventStream::publish(const std::string& session_id, const Event& e) {
    json line = e.to_json();
    line["session_id"] = session_id;
    {
        std::lock_guard lock(mu_);
        queue_.push_back(line.dump() + "\n");
    }
    cv_.notify_one();
}

void GlobalEventStream::flush() {
    std::unique_lock lock(mu_);
    drained_.wait(lock, [this] { return queue_.empty() && in_flight_ == 0; });
}

std::size_t GlobalEventStream::write_failures() const {
    std::lock_guard lock(mu_);
    return failures_;
}

void GlobalEventStream::run() {
    std::unique_lock lock(mu_);
    for (;;) {
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty() && stop_) return;
        std::string batch;
        while (!queue_.empty()) {
            batch += queue_.front();
            queue_.pop_front();
            ++in_flight_;
        }
        const std::size_t n = in_flight_;
        lock.unlock();
        bool ok = true;
        try {
            util::append_file(path_, batch);
        } catch (const std::exception& ex) {
            ok = false;
            spdlog::warn("global event stream {}: {}", path_.string(), ex.what());
        }
        lock.lock();
        if (!ok) failures_ += n;
        in_flight_ = 0;
        drained_.notify_all();
    }
}

SessionLog::SessionLog(std::string session_id, std::optional<std::filesystem::path> file, GlobalEventStream* global)
    : session_id_(std::move(session_id)), file_(std::move(file)), global_(global) {
    last_ms_ = now_ms();
    created_at_ = format_timestamp(last_ms_);
    std::lock_guard lock(mu_);
    persist_locked();
}

const Event& SessionLog::append(EventKind kind, json payload) {
    std::lock_guard lock(mu_);
    Event e;
    e.seq = next_seq_++;
    last_ms_ = std::max(last_ms_, now_ms());   // wall clock may step back
    e.timestamp = format_timestamp(last_ms_);
    e.kind = kind;
    e.payload = std::move(payload);
    events_.push_back(std::move(e));
    persist_locked();
    if (global_) global_->publish(session_id_, events_.back());
    return events_.back();
}

std::vector<Event> SessionLog::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::vector<Event> SessionLog::events_of(EventKind kind) const {
    std::lock_guard lock(mu_);
    std::vector<Event> out;
    for (const auto& e : events_)
        if (e.kind == kind) out.push_back(e);
    return out;
}

std::size_t SessionLog::size() const {
    std::lock_guard lock(mu_);
    return events_.size();
}

json SessionLog::to_json() const {
    std::lock_guard lock(mu_);
    json evs = json::array();
    for (const auto& e : events_) evs.push_back(e.to_json());
    return {{"session_id", session_id_}, {"created_at", created_at_}, {"events", evs}};
}

std::optional<std::string> SessionLog::persistence_error() const {
    std::lock_guard lock(mu_);
    return persistence_error_;
}

void SessionLog::persist_locked() {
    if (!file_) return;
    json evs = json::array();
    for (const auto& e : events_) evs.push_back(e.to_json());
    const json doc = {{"session_id", session_id_}, {"created_at", created_at_}, {"events", evs}};
    try {
        util::write_file_atomic(*file_, doc.dump(2) + "\n");
        persistence_error_.reset();
    } catch (const std::exception& ex) {
        if (!persistence_error_)
            spdlog::warn("session {}: cannot persist log to {}: {}; continuing in memory", session_id_,
                         file_->string(), ex.what());
        persistence_error_ = std::string("PersistenceFailure: ") + ex.what();
    }
}

json load_session_log(const std::filesystem::path& file) {
    json doc = json::parse(util::read_file(file), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw Error("MalformedLog", "session log " + file.string() + " is not JSON");
    return doc;
}

}  // namespace pfagent::reporting
