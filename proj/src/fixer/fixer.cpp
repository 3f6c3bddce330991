#include "pfagent/fixer/fixer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "pfagent/execution/script.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::fixer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kSkipDirs = {".git", "build", "vendor", "__pycache__", "workspace", "workspaces", ".tmp"};

std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::string> unique_sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

bool contains(const std::vector<std::string>& sorted, const std::string& x) {
    return std::binary_search(sorted.begin(), sorted.end(), x);
}

const std::set<std::string>& stop_words() {
    static const std::set<std::string> s = {
        "a", "an", "and", "are", "as", "at", "be", "by", "call", "file", "for", "from", "has", "have", "in",
        "is", "it", "last", "line", "most", "module", "no", "none", "not", "of", "on", "or", "recent", "the",
        "this", "to", "traceback", "true", "false", "was", "with", "self", "import", "print", "json", "ss",
        "pfsim", "v", "py", "error", "exception", "if", "else", "def", "return", "x", "i", "k", "get",
        "script", "result", "dumps", "u"};
    return s;
}

bool stop(const std::string& t) { return t.size() < 2 || stop_words().count(util::to_lower(t)) > 0; }

struct TermStats {
    bool in_error = false;
    int freq = 0;
};

void harvest(const std::string& text, bool is_error, std::map<std::string, TermStats>& terms) {
    static const std::regex exc_re(R"(\b([A-Z][A-Za-z0-9_]*(?:Error|Exception|Warning)|StopIteration|KeyboardInterrupt)\b)");
    static const std::regex quoted_re(R"(["']([A-Za-z_][A-Za-z0-9_]*)["'])");
    static const std::regex api_re(R"(\b(?:ss|pfsim)((?:\.[A-Za-z_][A-Za-z0-9_]*)+))");
    static const std::regex device_re(R"(\b((?:Line|PQ|PV|Slack|Shunt|Bus)_[A-Za-z0-9_]+)\b)");
    auto add = [&](const std::string& t) {
        if (stop(t)) return;
        auto& st = terms[t];
        st.freq += 1;
        st.in_error = st.in_error || is_error;
    };
    for (auto it = std::sregex_iterator(text.begin(), text.end(), exc_re); it != std::sregex_iterator(); ++it)
        add((*it)[1].str());
    for (auto it = std::sregex_iterator(text.begin(), text.end(), quoted_re); it != std::sregex_iterator(); ++it)
        add((*it)[1].str());
    for (auto it = std::sregex_iterator(text.begin(), text.end(), api_re); it != std::sregex_iterator(); ++it)
        for (const auto& part : util::split((*it)[1].str().substr(1), '.')) add(part);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), device_re); it != std::sregex_iterator(); ++it)
        add((*it)[1].str());
}

std::string section(const std::string& name, const std::string& body) {
    std::string out = "<<" + name + ">>\n" + body;
    if (out.back() != '\n') out += '\n';
    return out;
}

std::string error_text_of(const execution::ExecutionRecord& r) {
    std::string out;
    if (!r.stdout_text.empty()) out += "stdout:\n" + util::tail_lines(r.stdout_text, 40);
    if (!r.stderr_text.empty()) out += (out.empty() ? "" : "\n") + std::string("stderr:\n") + r.stderr_text;
    if (r.error != execution::ExecutionError::None)
        out += (out.empty() ? "" : "\n") + std::string("error class: ") + execution::to_string(r.error);
    if (!r.ok() && !r.result) out += "\nno RESULT_JSON line was printed";
    return out;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t size, std::size_t chunk, std::size_t overlap) {
    if (chunk == 0 || overlap >= chunk) throw Error("InvalidArgument", "need 0 <= overlap < chunk size");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < size; start += chunk - overlap) {
        const std::size_t end = std::min(start + chunk, size);
        out.emplace_back(start, end);
        if (end == size) break;
    }
    return out;
}

RepoIndex RepoIndex::build(const fs::path& root, std::size_t chunk_chars, std::size_t overlap_chars) {
    if (chunk_chars == 0 || overlap_chars >= chunk_chars)
        throw Error("InvalidArgument", "need 0 <= overlap < chunk size");
    RepoIndex idx;
    idx.chunk_chars_ = chunk_chars;
    idx.overlap_chars_ = overlap_chars;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) return idx;

    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        const auto name = it->path().filename().string();
        if (it->is_directory() && (kSkipDirs.count(name) || name.rfind("build", 0) == 0)) {
            it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file() && it->file_size() < (std::uintmax_t{1} << 20)) files.push_back(it->path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::string text;
        try {
            text = util::read_file(f);
        } catch (const std::exception&) {
            continue;
        }
        const std::string rel = fs::relative(f, root).generic_string();
        if (text.find('\0') != std::string::npos) {
            idx.skipped_binary_.push_back(rel);
            spdlog::debug("repository index: skipped binary file {}", rel);
            continue;
        }
        const auto path_toks = unique_sorted(word_tokens(rel));
        int n = 0;
        for (const auto& [b, e] : chunk_ranges(text.size(), chunk_chars, overlap_chars)) {
            idx.chunks_.push_back({rel, n++, b, e, text.substr(b, e - b)});
            idx.tokens_.push_back(unique_sorted(word_tokens(idx.chunks_.back().text)));
            idx.path_tokens_.push_back(path_toks);
        }
    }
    return idx;
}

std::vector<ScoredChunk> RepoIndex::search(const std::vector<std::string>& terms, std::size_t k) const {
    std::vector<std::string> q;
    for (const auto& t : terms) q.push_back(util::to_lower(t));
    std::vector<ScoredChunk> scored;
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        double s = 0.0;
        for (std::size_t r = 0; r < q.size(); ++r) {
            const double w = 1.0 + 1.0 / static_cast<double>(r + 1);   // earlier terms weigh more
            if (contains(tokens_[i], q[r])) s += w;
            if (contains(path_tokens_[i], q[r])) s += kPathBoost;
        }
        if (s > 0.0) scored.push_back({&chunks_[i], s});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.chunk->path != b.chunk->path) return a.chunk->path < b.chunk->path;
        return a.chunk->chunk_index < b.chunk->chunk_index;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

std::vector<std::string> extract_signal_terms(const std::string& error_text, const std::string& failing_code) {
    std::map<std::string, TermStats> terms;
    harvest(error_text, true, terms);
    harvest(failing_code, false, terms);
    std::vector<std::pair<std::string, TermStats>> v(terms.begin(), terms.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        if (a.second.in_error != b.second.in_error) return a.second.in_error;
        if (a.second.freq != b.second.freq) return a.second.freq > b.second.freq;
        if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (const auto& [t, s] : v) out.push_back(t);
    return out;
}

bool FixRequest::valid() const {
    return !user_message.empty() && !failing_code.empty() && !output_and_errors.empty() &&
           !case_identifier_and_config.empty();
}

std::string assemble_fix_prompt(const FixRequest& request, const std::vector<ScoredChunk>& repo_items,
                                std::size_t budget_chars) {
    std::string files;
    for (const auto& f : request.workspace_files) files += f + "\n";
    if (files.empty()) files = "(none)\n";
    const std::string head = section("USER_MESSAGE", request.user_message) +
                             section("AGENT_RESPONSE", request.agent_response.empty() ? "(template-generated script)"
                                                                                     : request.agent_response) +
                             section("FAILING_CODE", request.failing_code) +
                             section("OUTPUT_AND_ERRORS", request.output_and_errors) +
                             section("WORKSPACE_FILES", files) +
                             section("CASE_CONFIG", request.case_identifier_and_config);
    const std::string tail = section("INSTRUCTIONS",
                                     "Repair FAILING_CODE so it runs and prints RESULT_JSON: followed by one JSON "
                                     "object. Use the pfsim API as shown in the repository excerpts. Return the whole "
                                     "corrected script as exactly one fenced python block.");
    std::vector<std::string> items;
    for (const auto& it : repo_items)
        items.push_back("[" + it.chunk->path + " #" + std::to_string(it.chunk->chunk_index) + "]\n" + it.chunk->text +
                        (it.chunk->text.empty() || it.chunk->text.back() != '\n' ? "\n" : ""));
    auto render = [&](std::size_t n) {
        std::string repo;
        for (std::size_t i = 0; i < n; ++i) repo += items[i];
        return head + (n > 0 ? section("REPOSITORY", repo) : std::string()) + tail;
    };
    std::size_t n = items.size();
    std::string prompt = render(n);
    while (n > 0 && prompt.size() > budget_chars) prompt = render(--n);
    return prompt;
}

std::string to_string(FixFinal f) { return f == FixFinal::Fixed ? "Fixed" : "BestEffort"; }

json FixOutcome::to_json() const {
    json atts = json::array();
    for (const auto& a : attempts) {
        json j = {{"iteration", a.iteration}, {"repaired_code", a.repaired_code}, {"succeeded", a.succeeded}};
        j["validation"] = a.validation ? a.validation->to_json() : json(nullptr);
        atts.push_back(j);
    }
    return {{"final", to_string(final)},
            {"iterations_used", iterations_used},
            {"validated_locally", validated_locally},
            {"remaining_error", remaining_error},
            {"provider_error", provider_error ? json(*provider_error) : json(nullptr)},
            {"attempts", atts}};
}

FixOutcome repair_loop(const FixRequest& request, execution::CompletionProvider& provider, const RepoIndex* index,
                       const RepairOptions& options) {
    if (options.retry_limit < 1) throw Error("InvalidArgument", "retry_limit must be at least 1");
    if (options.validate_locally && options.workspace.empty())
        throw Error("InvalidArgument", "local validation needs a workspace");
    FixOutcome out;
    out.validated_locally = options.validate_locally;
    FixRequest current = request;
    const int limit = options.validate_locally ? options.retry_limit : 1;
    for (int it = 1; it <= limit; ++it) {
        std::vector<ScoredChunk> items;
        if (index) items = index->search(extract_signal_terms(current.output_and_errors, current.failing_code), options.top_k);
        const std::string prompt = assemble_fix_prompt(current, items);
        std::string response;
        try {
            response = provider.complete({{"system", "You repair failing pfsim power-flow scripts."}, {"user", prompt}});
        } catch (const Error& e) {
            out.provider_error = e.kind() + ": " + e.what();
            break;
        }
        FixAttempt att;
        att.iteration = it;
        att.repaired_code = execution::normalize_response(response, execution::Provenance::Repair, it).code;
        if (options.validate_locally) {
            execution::GeneratedScript s;
            s.code = att.repaired_code;
            s.provenance = execution::Provenance::Repair;
            s.attempt_index = it;
            const std::string name =
                "fix_turn_" + std::to_string(request.turn_index) + "_iter_" + std::to_string(it) + ".py";
            att.validation = execution::execute_sandboxed(s, options.workspace, options.limits, name);
            att.succeeded = att.validation->exit_status == 0;
        }
        out.attempts.push_back(att);
        if (att.succeeded) break;
        if (att.validation) {
            // The new error replaces the old one, along with the code that produced it.
            current.failing_code = att.repaired_code;
            current.output_and_errors = error_text_of(*att.validation);
        }
    }
    out.iterations_used = static_cast<int>(out.attempts.size());
    out.final = !out.attempts.empty() && out.attempts.back().succeeded ? FixFinal::Fixed : FixFinal::BestEffort;
    if (out.final == FixFinal::BestEffort)
        out.remaining_error = out.provider_error.value_or(current.output_and_errors);
    return out;
}

FixEventResult record_fix_event(const FixOutcome& outcome, const FixRequest& request, reporting::SessionLog& log,
                                const evolution::SignatureLibrary& library, const evolution::ProfileStore* store) {
    FixEventResult res;
    res.fix_id = "fix-" + std::to_string(request.turn_index) + "-" +
                 std::to_string(log.events_of(reporting::EventKind::Fix).size() + 1);
    json payload = outcome.to_json();
    payload["fix_id"] = res.fix_id;
    payload["turn"] = request.turn_index;
    payload["failing_code"] = request.failing_code;

    if (outcome.final == FixFinal::Fixed) {
        res.note = "fixed in " + std::to_string(outcome.iterations_used) + " iteration" +
                   (outcome.iterations_used == 1 ? "" : "s") + ", local validation passed";
        payload["note"] = *res.note;
        log.append(reporting::EventKind::Fix, payload);
        return res;
    }

    evolution::FailureRecord rec;
    rec.origin = evolution::FailureOrigin::Deployment;
    rec.prompt_text = request.user_message;
    rec.error_text = outcome.remaining_error;
    rec.scenario_id = log.session_id();
    rec.turn_index = request.turn_index;
    const auto acts = evolution::attribute_failures({rec}, library);
    for (const auto& [sig, recs] : acts)
        if (sig != evolution::kUnattributed) res.queued_signatures.push_back(sig);
    payload["note"] = outcome.validated_locally ? "best-effort fix, local validation failed"
                                                : "best-effort fix, not validated locally";
    payload["queued_signatures"] = res.queued_signatures;
    log.append(reporting::EventKind::Fix, payload);
    if (!res.queued_signatures.empty()) {
        if (store) store->enqueue(rec);
    } else {
        log.append(reporting::EventKind::Feedback,
                   {{"turn", request.turn_index}, {"source", "fix"}, {"unattributed", true}, {"record", rec.to_json()}});
    }
    return res;
}

}  // namespace pfagent::fixer
