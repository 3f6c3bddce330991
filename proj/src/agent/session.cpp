#include "pfagent/agent/session.hpp"

#include <algorithm>
#include <cstdlib>

#include <spdlog/spdlog.h>

#include "pfagent/execution/gate.hpp"
#include "pfagent/execution/retry.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/paths.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::agent {

using execution::GeneratedScript;
using reporting::EventKind;
using reporting::TurnReport;
using reporting::TurnStatus;

namespace {

constexpr std::pair<AgentMode, const char*> kModes[] = {
    {AgentMode::BaseModel, "base"},   {AgentMode::FineTuned, "fine-tuned"}, {AgentMode::Rag, "rag"},
    {AgentMode::FineTunedRag, "fine-tuned-rag"}, {AgentMode::Mock, "mock"},  {AgentMode::TemplateGate, "template-gate"},
};

std::string last_line(const std::string& s) {
    const auto lines = util::split_lines(util::trim(s));
    return lines.empty() ? std::string() : lines.back();
}

std::string script_file(int turn, int attempt) {
    return "turn_" + std::to_string(turn) + "_attempt_" + std::to_string(attempt) + ".py";
}

}  // namespace

std::string to_string(AgentMode m) {
    for (const auto& [k, n] : kModes)
        if (k == m) return n;
    return "unknown";
}

std::optional<AgentMode> mode_from_string(const std::string& s) {
    for (const auto& [k, n] : kModes)
        if (s == n) return k;
    return std::nullopt;
}

bool uses_gate(AgentMode m) {
    return m == AgentMode::TemplateGate || m == AgentMode::Rag || m == AgentMode::FineTunedRag;
}

bool uses_retrieval(AgentMode m) { return m == AgentMode::Rag || m == AgentMode::FineTunedRag || m == AgentMode::Mock; }

json AgentConfig::to_json() const {
    const bool key_set = !http.api_key.empty() || std::getenv("PFAGENT_API_KEY") != nullptr;
    return {{"mode", agent::to_string(mode)},
            {"max_attempts", max_attempts},
            {"static_validation", static_validation},
            {"wall_time_ms", limits.wall_time.count()},
            {"memory_bytes", limits.memory_bytes},
            {"fix", {{"validate_locally", fix_validate_locally}, {"retry_limit", fix_retry_limit}, {"top_k", fix_top_k}}},
            {"provider",
             {{"endpoint", http.endpoint},
              {"model", http.model},
              {"fine_tuned_model", fine_tuned_model},
              {"temperature", http.temperature},
              {"api_key", key_set ? "****" : ""},
              {"api_key_set", key_set}}}};
}

void AgentConfig::update_from_json(const json& j) {
    if (!j.is_object()) throw Error("InvalidConfig", "config must be a JSON object");
    AgentConfig next = *this;
    try {
        if (j.contains("mode")) {
            const auto m = mode_from_string(j["mode"].get<std::string>());
            if (!m) throw Error("InvalidConfig", "unknown mode " + j["mode"].dump());
            next.mode = *m;
        }
        if (j.contains("max_attempts")) next.max_attempts = j["max_attempts"].get<int>();
        if (j.contains("static_validation")) next.static_validation = j["static_validation"].get<bool>();
        if (j.contains("wall_time_ms")) next.limits.wall_time = std::chrono::milliseconds(j["wall_time_ms"].get<long long>());
        if (j.contains("memory_bytes")) next.limits.memory_bytes = j["memory_bytes"].get<std::size_t>();
        if (j.contains("fix")) {
            const auto& f = j["fix"];
            next.fix_validate_locally = f.value("validate_locally", next.fix_validate_locally);
            next.fix_retry_limit = f.value("retry_limit", next.fix_retry_limit);
            next.fix_top_k = f.value("top_k", next.fix_top_k);
        }
        if (j.contains("provider")) {
            const auto& p = j["provider"];
            next.http.endpoint = p.value("endpoint", next.http.endpoint);
            next.http.model = p.value("model", next.http.model);
            next.fine_tuned_model = p.value("fine_tuned_model", next.fine_tuned_model);
            next.http.temperature = p.value("temperature", next.http.temperature);
            // the masked placeholder read back from GET leaves the key alone
            if (p.contains("api_key") && p["api_key"].is_string() && p["api_key"] != "****")
                next.http.api_key = p["api_key"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw Error("InvalidConfig", e.what());
    }
    if (next.max_attempts < 1 || next.fix_retry_limit < 1 || next.limits.wall_time.count() <= 0)
        throw Error("InvalidConfig", "attempt limits and wall time must be positive");
    *this = next;
}

std::shared_ptr<AgentResources> AgentResources::load_default() {
    auto r = std::make_shared<AgentResources>();
    r->vocabulary = intent::Vocabulary::load_default();
    r->aliases = intent::CaseAliases::load_default();
    const auto pages = knowledge::load_manual_pages(util::data_dir() / "manual" / "pfsim_manual.txt");
    r->manual_index = std::make_shared<knowledge::SimilarityIndex>(
        knowledge::SimilarityIndex::build(pages, 2, 1, std::make_shared<knowledge::HashedBagOfWords>()));
    r->examples = knowledge::load_code_examples(util::data_dir() / "code_examples.json");
    r->forbidden = execution::ForbiddenPatternSet::load_default();
    r->signatures = evolution::SignatureLibrary::load_default();
    r->packs = evolution::PackRegistry::load_default();
    return r;
}

const fixer::RepoIndex& AgentResources::repo_index() const {
    std::call_once(repo_once_, [this] { repo_ = std::make_unique<fixer::RepoIndex>(fixer::RepoIndex::build(util::repo_root())); });
    return *repo_;
}

std::shared_ptr<execution::CompletionProvider> make_provider(const AgentConfig& config) {
    switch (config.mode) {
        case AgentMode::TemplateGate: return nullptr;
        case AgentMode::Mock:
            return std::make_shared<execution::SimulatedCoderProvider>(intent::Vocabulary::load_default(), config.simulated);
        case AgentMode::BaseModel:
        case AgentMode::Rag: {
            auto c = config.http;
            c.mode = execution::ProviderMode::BaseModel;
            return std::make_shared<execution::HttpCompletionProvider>(c);
        }
        case AgentMode::FineTuned:
        case AgentMode::FineTunedRag: {
            auto c = config.http;
            c.model = config.fine_tuned_model;
            c.mode = execution::ProviderMode::FineTuned;
            return std::make_shared<execution::HttpCompletionProvider>(c);
        }
    }
    return nullptr;
}

Session::Session(std::string id, std::filesystem::path workspace, AgentConfig config,
                 std::shared_ptr<const AgentResources> resources, std::shared_ptr<execution::CompletionProvider> provider,
                 const evolution::ProfileStore* store, reporting::GlobalEventStream* global)
    : id_(std::move(id)),
      workspace_(std::move(workspace)),
      config_(std::move(config)),
      res_(std::move(resources)),
      provider_(std::move(provider)),
      repair_provider_(provider_),
      store_(store),
      vocab_(res_->vocabulary),
      log_(id_, (std::filesystem::create_directories(workspace_), workspace_ / "session_log.json"), global) {
    if (store_) profile_ = store_->load();
    evolution::apply_overrides(profile_, vocab_);
    rules_ = evolution::load_active_rules(profile_);
}

std::optional<intent::CaseReference> Session::active_case() const {
    std::lock_guard lock(state_mu_);
    return intent_state_.active_case;
}

std::vector<TurnRecord> Session::turns() const {
    std::lock_guard lock(state_mu_);
    return records_;
}

std::optional<TurnRecord> Session::turn(int turn_index) const {
    std::lock_guard lock(state_mu_);
    for (const auto& r : records_)
        if (r.turn_index == turn_index) return r;
    return std::nullopt;
}

TurnRecord* Session::find_turn(int turn_index) {
    for (auto& r : records_)
        if (r.turn_index == turn_index) return &r;
    return nullptr;
}

const knowledge::CaseInventory& Session::inventory_for(const intent::CaseReference& ref) {
    const auto it = inventories_.find(ref.identifier);
    if (it != inventories_.end()) return it->second;
    return inventories_.emplace(ref.identifier, knowledge::build_case_inventory(ref, workspace_)).first->second;
}

TurnReport Session::handle_turn(const std::string& text, const std::vector<std::string>& attached_files) {
    std::unique_lock busy(busy_, std::try_to_lock);
    if (!busy) throw Busy();
    return run_turn(text, attached_files);
}

TurnReport Session::answer(const intent::ParsedObjective& obj, const std::string& text) {
    if (obj.request_type == intent::RequestKind::DebuggingInsight) {
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (!it->execution || it->execution->ok()) continue;
            const auto& ex = *it->execution;
            return reporting::answer_report(
                obj.turn_index, "Turn " + std::to_string(it->turn_index) + " failed with " +
                                    execution::to_string(ex.error) + ": " + last_line(ex.stderr_text) +
                                    "\nUse the fix action on that turn to repair the script.");
        }
        return reporting::answer_report(obj.turn_index, "No earlier turn in this session failed.");
    }
    const auto hits = res_->manual_index->retrieve(text, 1);
    if (hits.empty()) return reporting::answer_report(obj.turn_index, "The backend manual has no matching passage.");
    const auto& w = hits.front().window;
    std::string body = w.text.size() > 1500 ? w.text.substr(0, 1500) + " ..." : w.text;
    return reporting::answer_report(obj.turn_index, "From the backend manual, pages " + std::to_string(w.start_page) +
                                                        "-" + std::to_string(w.end_page) + ":\n" + body);
}

TurnReport Session::run_turn(const std::string& text, const std::vector<std::string>& attached) {
    TurnRecord rec;
    {
        std::lock_guard lock(state_mu_);
        rec.turn_index = intent_state_.last_turn_index + 1;
    }
    rec.text = text;
    const int n = rec.turn_index;

    intent::UserTurn ut{n, text, attached, reporting::format_timestamp(
                                              std::chrono::duration_cast<std::chrono::milliseconds>(
                                                  std::chrono::system_clock::now().time_since_epoch())
                                                  .count())};
    json turn_event = {{"turn", n}, {"text", text}, {"files", attached}};

    const auto finish = [&](TurnReport report) {
        rec.report = report;
        std::lock_guard lock(state_mu_);
        history_.push_back("turn " + std::to_string(n) + ": " + report.summary);
        records_.push_back(std::move(rec));
        return report;
    };

    intent::ParsedObjective obj;
    try {
        intent::SessionIntentState next;
        {
            std::lock_guard lock(state_mu_);
            next = intent_state_;
        }
        obj = intent::parse_turn(ut, next, vocab_, res_->aliases, util::list_file_names(workspace_));
        std::lock_guard lock(state_mu_);
        intent_state_ = next;
    } catch (const Error& e) {
        turn_event["error"] = {{"class", e.kind()}, {"message", e.what()}};
        log_.append(EventKind::Turn, turn_event);
        {
            std::lock_guard lock(state_mu_);
            intent_state_.last_turn_index = n;
        }
        return finish(reporting::error_report(n, TurnStatus::Rejected, e.kind(), e.what()));
    }
    rec.objective = obj;
    turn_event["objective"] = obj.to_json();
    log_.append(EventKind::Turn, turn_event);

    if (obj.request_type != intent::RequestKind::RunnableCode) return finish(answer(obj, text));
    if (!obj.case_ref)
        return finish(reporting::error_report(n, TurnStatus::Rejected, "NoCase",
                                              "No case is selected. Name a built-in case or upload a case file."));

    const knowledge::CaseInventory* inventory = nullptr;
    try {
        inventory = &inventory_for(*obj.case_ref);
    } catch (const Error& e) {
        return finish(reporting::error_report(n, TurnStatus::Rejected, e.kind(), e.what()));
    }

    const auto check = [&](const GeneratedScript& s) {
        if (!config_.static_validation) {
            execution::StaticCheckReport r;
            r.syntax_ok = r.case_load_ok = r.index_resolution_ok = true;
            return r;
        }
        return execution::static_check(s, *obj.case_ref, *inventory, res_->forbidden, workspace_);
    };
    const auto observe = [&](const execution::AttemptRecord& a) {
        log_.append(EventKind::Generation, {{"turn", n},
                                            {"attempt", a.script.attempt_index},
                                            {"provenance", execution::to_string(a.script.provenance)},
                                            {"raw_response", a.script.raw_response},
                                            {"code", a.script.code}});
        log_.append(EventKind::StaticCheck, {{"turn", n}, {"attempt", a.script.attempt_index}, {"report", a.report.to_json()}});
    };

    std::optional<GeneratedScript> script;
    if (uses_gate(config_.mode) && obj.coding_gate_triggered) {
        try {
            GeneratedScript s = execution::template_gate(obj, *inventory);
            const auto report = check(s);
            observe({s, report});
            if (report.pass()) script = std::move(s);
        } catch (const execution::GateUnsupported& e) {
            spdlog::debug("session {}: gate declined turn {}: {}", id_, n, e.what());
        }
    }
    if (!script) {
        if (!provider_)
            return finish(reporting::error_report(n, TurnStatus::Rejected, "NoProvider",
                                                  "This request needs a code model, and none is configured."));
        std::vector<std::string> history;
        {
            std::lock_guard lock(state_mu_);
            history = history_;
        }
        const auto prompt = knowledge::assemble_prompt(
            obj, text, uses_retrieval(config_.mode) ? res_->manual_index.get() : nullptr,
            uses_retrieval(config_.mode) ? res_->examples : std::vector<knowledge::CodeExample>{}, *inventory, rules_,
            history);
        try {
            auto out = execution::run_with_retries(prompt, *provider_, config_.max_attempts, check, {}, observe);
            script = std::move(out.script);
        } catch (const execution::AttemptsExhausted& e) {
            const auto& last = e.attempts().back();
            rec.script = last.script;
            return finish(reporting::error_report(n, TurnStatus::StaticCheckFailed, e.kind(),
                                                  "No generated script passed validation in " +
                                                      std::to_string(e.attempts().size()) + " attempt(s): " +
                                                      util::join(last.report.messages, "; "),
                                                  last.script.code));
        } catch (const Error& e) {
            if (e.kind() != "EmptyResponse") throw;
            return finish(reporting::error_report(n, TurnStatus::Rejected, e.kind(), e.what()));
        }
    }

    const std::string file = script_file(n, script->attempt_index);
    auto record = execution::execute_sandboxed(*script, workspace_, config_.limits, file);
    log_.append(EventKind::Execution, {{"turn", n}, {"script_file", file}, {"code", script->code}, {"record", record.to_json()}});
    {
        std::lock_guard lock(state_mu_);
        intent_state_.prior_error = !record.ok();
    }
    TurnReport report = reporting::package_report(record, *script, obj);
    rec.script = std::move(*script);
    rec.execution = std::move(record);
    return finish(report);
}

TurnReport Session::execute_code(const std::string& code) {
    std::unique_lock busy(busy_, std::try_to_lock);
    if (!busy) throw Busy();
    if (util::trim(code).empty()) throw Error("EmptyCode", "no code to execute");
    TurnRecord rec;
    intent::ParsedObjective obj;
    {
        std::lock_guard lock(state_mu_);
        rec.turn_index = ++intent_state_.last_turn_index;
        obj.case_ref = intent_state_.active_case;
        obj.ledger = intent_state_.ledger;
    }
    const int n = rec.turn_index;
    obj.turn_index = n;
    rec.text = "[user code]";
    log_.append(EventKind::Turn, {{"turn", n}, {"text", rec.text}, {"user_code", true}});
    GeneratedScript script = execution::normalize_response(execution::fence(code), execution::Provenance::Model, 1);
    script.raw_response = code;
    const std::string file = "turn_" + std::to_string(n) + "_user.py";
    auto record = execution::execute_sandboxed(script, workspace_, config_.limits, file);
    log_.append(EventKind::Execution, {{"turn", n}, {"script_file", file}, {"code", script.code}, {"record", record.to_json()}});
    TurnReport report = reporting::package_report(record, script, obj);
    rec.report = report;
    rec.objective = obj;
    rec.script = std::move(script);
    rec.execution = std::move(record);
    std::lock_guard lock(state_mu_);
    intent_state_.prior_error = !rec.execution->ok();
    history_.push_back("turn " + std::to_string(n) + ": " + report.summary);
    records_.push_back(std::move(rec));
    return report;
}

Session::FixResult Session::fix(int turn_index) {
    std::unique_lock busy(busy_, std::try_to_lock);
    if (!busy) throw Busy();
    TurnRecord snapshot;
    {
        std::lock_guard lock(state_mu_);
        const TurnRecord* r = find_turn(turn_index);
        if (!r) throw Error("UnknownTurn", "turn " + std::to_string(turn_index) + " does not exist");
        snapshot = *r;
    }
    if (!snapshot.execution || snapshot.execution->ok() || !snapshot.script)
        throw Error("NothingToFix", "turn " + std::to_string(turn_index) + " has no failed execution");
    if (!repair_provider_) throw Error("NoProvider", "no repair provider is configured");

    fixer::FixRequest req;
    req.user_message = snapshot.text;
    req.agent_response = snapshot.script->raw_response;
    req.failing_code = snapshot.script->code;
    req.output_and_errors = snapshot.execution->stdout_text + snapshot.execution->stderr_text;
    req.workspace_files = util::list_file_names(workspace_);
    json cfg = config_.to_json();
    if (snapshot.objective && snapshot.objective->case_ref) cfg["case"] = snapshot.objective->case_ref->to_json();
    req.case_identifier_and_config = cfg.dump();
    req.turn_index = turn_index;

    fixer::RepairOptions opts;
    opts.validate_locally = config_.fix_validate_locally;
    opts.retry_limit = config_.fix_retry_limit;
    opts.top_k = config_.fix_top_k;
    opts.workspace = workspace_;
    opts.limits = config_.limits;
    FixResult out;
    out.outcome = fixer::repair_loop(req, *repair_provider_, &res_->repo_index(), opts);
    out.event = fixer::record_fix_event(out.outcome, req, log_, res_->signatures, store_);

    std::lock_guard lock(state_mu_);
    if (TurnRecord* r = find_turn(turn_index)) {
        r->fixes.push_back(out.outcome);
        r->report.fix_history.push_back(out.event.fix_id);
    }
    return out;
}

json Session::feedback(int turn_index, const std::string& issue_text, const std::optional<std::string>& root_cause) {
    if (util::trim(issue_text).empty()) throw Error("EmptyIssue", "issue text is empty");
    TurnRecord snapshot;
    {
        std::lock_guard lock(state_mu_);
        const TurnRecord* r = find_turn(turn_index);
        if (!r) throw Error("UnknownTurn", "turn " + std::to_string(turn_index) + " does not exist");
        snapshot = *r;
    }
    evolution::FailureRecord fr;
    fr.origin = evolution::FailureOrigin::Deployment;
    fr.prompt_text = snapshot.text;
    if (snapshot.execution && !snapshot.execution->ok()) fr.error_text = snapshot.execution->stderr_text;
    fr.human_issue = root_cause ? issue_text + "\n" + *root_cause : issue_text;
    fr.scenario_id = id_;
    fr.turn_index = turn_index;

    const auto activations = evolution::attribute_failures({fr}, res_->signatures);
    std::vector<std::string> matched;
    for (const auto& [sig, recs] : activations)
        if (sig != evolution::kUnattributed) matched.push_back(sig);
    if (store_) store_->enqueue(fr);

    json payload = {{"turn", turn_index},
                    {"issue_text", issue_text},
                    {"root_cause", root_cause ? json(*root_cause) : json(nullptr)},
                    {"signatures", matched},
                    {"queued", store_ != nullptr}};
    const auto& ev = log_.append(EventKind::Feedback, payload);
    payload["seq"] = ev.seq;
    payload["timestamp"] = ev.timestamp;
    return payload;
}

}  // namespace pfagent::agent
