#include "pfagent/execution/static_check.hpp"

#include <set>

#include "pfagent/util/backend.hpp"
#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/paths.hpp"
#include "pfagent/util/process.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::execution {

using nlohmann::json;

namespace {

constexpr const char* kSyntaxChecker = R"PY(
import ast, sys
src = sys.stdin.read()
try:
    ast.parse(src, "<script>")
except SyntaxError as e:
    print("SyntaxError: %s (line %s)" % (e.msg, e.lineno))
    sys.exit(1)
)PY";

std::vector<std::string> all_captures(const std::string& text, const std::regex& re, int group = 1) {
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it)
        out.push_back((*it)[group].str());
    return out;
}

}  // namespace

ForbiddenPatternSet ForbiddenPatternSet::from_json(const json& doc) {
    ForbiddenPatternSet set;
    for (const auto& p : doc.at("patterns"))
        set.add(p.at("id").get<std::string>(), p.at("pattern").get<std::string>(), p.value("message", ""));
    return set;
}

ForbiddenPatternSet ForbiddenPatternSet::load(const std::filesystem::path& path) {
    json doc = json::parse(util::read_file(path), nullptr, false);
    if (doc.is_discarded()) throw Error("ConfigError", "forbidden pattern file " + path.string() + " is not JSON");
    return from_json(doc);
}

ForbiddenPatternSet ForbiddenPatternSet::load_default() { return load(util::data_dir() / "forbidden_patterns.json"); }

void ForbiddenPatternSet::add(const std::string& id, const std::string& pattern, const std::string& message) {
    ForbiddenPattern p;
    p.id = id;
    p.pattern = pattern;
    p.message = message;
    try {
        p.re = std::regex(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw Error("ConfigError", "forbidden pattern " + id + " does not compile: " + e.what());
    }
    for (auto& existing : patterns) {
        if (existing.id == id) {
            existing = std::move(p);
            return;
        }
    }
    patterns.push_back(std::move(p));
}

json StaticCheckReport::to_json() const {
    json hits = json::array();
    for (const auto& h : forbidden_hits) hits.push_back({{"pattern", h.pattern_id}, {"line", h.line}, {"text", h.text}});
    return {{"syntax_ok", syntax_ok},
            {"case_load_ok", case_load_ok},
            {"index_resolution_ok", index_resolution_ok},
            {"forbidden_hits", hits},
            {"messages", messages},
            {"pass", pass()}};
}

std::optional<std::string> python_syntax_error(const std::string& code, const std::filesystem::path& workspace) {
    std::filesystem::create_directories(workspace);
    util::ProcessSpec spec;
    spec.argv = {util::python_executable().string(), "-c", kSyntaxChecker};
    spec.cwd = workspace;
    spec.env = util::backend_environment(workspace);
    spec.stdin_data = code;
    spec.limits.wall_time = std::chrono::seconds(30);
    const auto res = util::run_process(spec);
    if (res.spawn_failed) throw Error("SandboxFailure", "could not start the Python parser");
    if (res.exit_code == 0 && res.term_signal == 0) return std::nullopt;
    const std::string msg = util::trim(res.stdout_text.empty() ? res.stderr_text : res.stdout_text);
    return msg.empty() ? std::string("SyntaxError: parser failed") : msg;
}

StaticCheckReport static_check(const GeneratedScript& script, const intent::CaseReference& case_ref,
                               const knowledge::CaseInventory& inventory, const ForbiddenPatternSet& patterns,
                               const std::filesystem::path& workspace) {
    StaticCheckReport r;
    const std::string& code = script.code;

    if (auto err = python_syntax_error(code, workspace)) {
        r.messages.push_back(*err);
    } else {
        r.syntax_ok = true;
    }

    // Case loading.
    static const std::regex get_case_re(R"(pfsim\.get_case\(\s*["']([^"']*)["']\s*\))");
    static const std::regex literal_load_re(R"(pfsim\.load\(\s*["']([^"']*)["'])");
    const auto get_case_ids = all_captures(code, get_case_re);
    const auto load_paths = all_captures(code, literal_load_re);
    if (case_ref.source == intent::CaseSource::BuiltIn) {
        bool ok = !get_case_ids.empty();
        for (const auto& id : get_case_ids) {
            if (id != case_ref.identifier) {
                ok = false;
                r.messages.push_back("script loads built-in case \"" + id + "\" but the active case is \"" +
                                     case_ref.identifier + "\"");
            }
        }
        if (get_case_ids.empty())
            r.messages.push_back("built-in case must be loaded with pfsim.load(pfsim.get_case(\"" +
                                 case_ref.identifier + "\"))");
        if (!load_paths.empty()) {
            ok = false;
            r.messages.push_back("built-in case \"" + case_ref.identifier +
                                 "\" must not be loaded from a file path; found pfsim.load(\"" + load_paths.front() +
                                 "\")");
        }
        r.case_load_ok = ok;
    } else {
        bool ok = false;
        for (const auto& p : load_paths) {
            if (p == case_ref.identifier) ok = true;
            else r.messages.push_back("script loads \"" + p + "\" but the uploaded case is \"" + case_ref.identifier + "\"");
        }
        if (load_paths.empty())
            r.messages.push_back("uploaded case must be loaded with pfsim.load(\"" + case_ref.identifier + "\")");
        if (!get_case_ids.empty()) {
            ok = false;
            r.messages.push_back("uploaded case \"" + case_ref.identifier + "\" must not be loaded with pfsim.get_case");
        }
        for (const auto& p : load_paths)
            if (p != case_ref.identifier) ok = false;
        r.case_load_ok = ok;
    }

    // Device identifiers and bus numbers.
    static const std::regex declared_re(R"(["']idx["']\s*:\s*["']([^"']+)["'])");
    static const std::regex device_re(R"(["']((?:Line|PQ|PV|Slack|Shunt)_\w+)["'])");
    static const std::regex bus_re(R"(["']bus["']\s*:\s*(\d+))");
    std::set<std::string> declared;
    for (const auto& id : all_captures(code, declared_re)) declared.insert(id);
    std::set<std::string> unknown_ids;
    for (const auto& id : all_captures(code, device_re))
        if (!inventory.has_device_id(id) && !declared.count(id)) unknown_ids.insert(id);
    std::set<int> unknown_buses;
    for (const auto& b : all_captures(code, bus_re)) {
        const int bus = std::stoi(b);
        if (!inventory.has_bus(bus)) unknown_buses.insert(bus);
    }
    for (const auto& id : unknown_ids)
        r.messages.push_back("device \"" + id + "\" does not exist in case " + case_ref.identifier);
    for (int bus : unknown_buses)
        r.messages.push_back("bus " + std::to_string(bus) + " does not exist in case " + case_ref.identifier);
    r.index_resolution_ok = unknown_ids.empty() && unknown_buses.empty();

    // Patterns are matched line by line, so ^ anchors at each line start.
    const auto lines = util::split_lines(code);
    for (const auto& p : patterns.patterns) {
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (!std::regex_search(lines[i], p.re)) continue;
            const int line = static_cast<int>(i) + 1;
            r.forbidden_hits.push_back({p.id, line, util::trim(lines[i])});
            r.messages.push_back("line " + std::to_string(line) + ": " + p.message);
        }
    }
    return r;
}

}  // namespace pfagent::execution
