#include "pfagent/intent/vocabulary.hpp"

#include <cctype>

#include "pfagent/util/files.hpp"
#include "pfagent/util/paths.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::intent {

namespace {

constexpr auto kFlags = std::regex::ECMAScript | std::regex::icase;

std::regex compile(const std::string& pattern) {
    try {
        return std::regex(pattern, kFlags);
    } catch (const std::regex_error& e) {
        throw Error("InvalidPattern", "cannot compile pattern '" + pattern + "': " + e.what());
    }
}

std::vector<std::regex> compile_all(const json& list) {
    std::vector<std::regex> out;
    for (const auto& p : list) out.push_back(compile(p.get<std::string>()));
    return out;
}

json read_json(const std::filesystem::path& path) {
    json doc = json::parse(util::read_file(path), nullptr, false);
    if (doc.is_discarded()) throw Error("InvalidVocabulary", path.string() + " is not valid JSON");
    return doc;
}

std::string alias_regex(const std::string& alias) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : alias) {
        if (c == ' ' || c == '-' || c == '_') {
            if (!cur.empty()) words.push_back(util::regex_escape(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) words.push_back(util::regex_escape(cur));
    return "\\b" + util::join(words, "[\\s_-]*") + "\\b";
}

}  // namespace

void Vocabulary::add_entry(const json& entry) {
    const auto marker = marker_from_string(entry.at("marker").get<std::string>());
    if (!marker) throw Error("InvalidVocabulary", "unknown marker " + entry.at("marker").dump());
    std::vector<ParamSpec> params;
    for (const auto& p : entry.value("params", json::array())) {
        ParamSpec s;
        s.name = p.at("name").get<std::string>();
        s.unit = p.value("unit", "const");
        if (p.contains("group")) s.groups.push_back(p.at("group").get<int>());
        if (p.contains("groups"))
            for (const auto& g : p.at("groups")) s.groups.push_back(g.get<int>());
        s.unit_group = p.value("unit_group", 0);
        if (p.contains("value")) s.value = p.at("value");
        params.push_back(std::move(s));
    }
    std::vector<std::string> sources;
    if (entry.contains("pattern")) sources.push_back(entry.at("pattern").get<std::string>());
    for (const auto& p : entry.value("patterns", json::array())) sources.push_back(p.get<std::string>());
    for (auto& src : sources) entries_.push_back({*marker, src, compile(src), params});
}

Vocabulary Vocabulary::from_json(const json& doc) {
    Vocabulary v;
    v.version_ = doc.value("version", 0);
    const json cls = doc.value("classifier", json::object());
    v.classifier_.code_markers = compile_all(cls.value("code_markers", json::array()));
    v.classifier_.debug_phrases = compile_all(cls.value("debug_phrases", json::array()));
    v.classifier_.explain_markers = compile_all(cls.value("explain_markers", json::array()));
    for (const auto& e : doc.value("markers", json::array())) v.add_entry(e);
    if (v.entries_.empty()) throw Error("InvalidVocabulary", "vocabulary has no marker patterns");
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

Vocabulary Vocabulary::load_default() { return load(util::data_dir() / "vocabulary.json"); }

void Vocabulary::add_pattern_override(const json& entry) { add_entry(entry); }

void Vocabulary::add_marker_override(const std::string& spec) { add_entry(compile_marker_template(spec)); }

json compile_marker_template(const std::string& spec) {
    const auto parts = util::split(spec, '|');
    if (parts.size() < 2) throw Error("InvalidPattern", "marker override needs 'Marker|phrase': " + spec);
    json entry = {{"marker", util::trim(parts[0])}, {"params", json::array()}};
    std::string tmpl;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const std::string seg = util::trim(parts[i]);
        const auto eq = seg.find('=');
        if (eq != std::string::npos && seg.find(' ') == std::string::npos && seg.find('{') == std::string::npos) {
            entry["params"].push_back(
                {{"name", seg.substr(0, eq)}, {"value", seg.substr(eq + 1)}, {"unit", "const"}});
        } else {
            tmpl = seg;
        }
    }
    if (tmpl.empty()) throw Error("InvalidPattern", "marker override has no phrase: " + spec);

    static const std::string kNumber = "([^\\s,;]+)";
    std::string re = "\\b";
    int group = 0;
    std::vector<int> pair_groups;
    for (std::size_t i = 0; i < tmpl.size();) {
        const char c = tmpl[i];
        if (c == '{') {
            const auto close = tmpl.find('}', i);
            if (close == std::string::npos) throw Error("InvalidPattern", "unclosed placeholder in " + spec);
            const std::string name = tmpl.substr(i + 1, close - i - 1);
            ++group;
            if (name == "bus_a" || name == "bus_b") {
                re += "(\\d+)";
                pair_groups.push_back(group);
            } else if (name == "bus") {
                re += "(\\d+)";
                entry["params"].push_back({{"name", "bus"}, {"group", group}, {"unit", "bus"}});
            } else if (name == "p") {
                re += kNumber;
                entry["params"].push_back({{"name", "p"}, {"group", group}, {"unit", "power_mw"}});
            } else if (name == "v") {
                re += kNumber;
                entry["params"].push_back({{"name", "v"}, {"group", group}, {"unit", "voltage_pu"}});
            } else if (name == "factor" || name == "threshold") {
                re += kNumber;
                entry["params"].push_back({{"name", name}, {"group", group}, {"unit", name}});
            } else {
                throw Error("InvalidPattern", "unknown placeholder {" + name + "} in " + spec);
            }
            i = close + 1;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            while (i < tmpl.size() && std::isspace(static_cast<unsigned char>(tmpl[i]))) ++i;
            re += "\\s+";
        } else if (c == '-' || tmpl.compare(i, 3, "\xE2\x80\x93") == 0 || tmpl.compare(i, 3, "\xE2\x80\x94") == 0) {
            re += "\\s*(?:-|\xE2\x80\x93|\xE2\x80\x94|\xE2\x88\x92|to)\\s*";
            i += (c == '-') ? 1 : 3;
        } else {
            re += util::regex_escape(std::string(1, c));
            ++i;
        }
    }
    if (pair_groups.size() == 2)
        entry["params"].push_back({{"name", "bus_pair"}, {"groups", pair_groups}, {"unit", "bus_pair"}});
    else if (!pair_groups.empty())
        throw Error("InvalidPattern", "{bus_a} and {bus_b} must appear together in " + spec);
    entry["patterns"] = json::array({re});
    return entry;
}

CaseAliases CaseAliases::from_json(const json& doc) {
    CaseAliases out;
    for (const auto& c : doc.at("cases")) {
        CaseAlias a;
        a.id = c.at("id").get<std::string>();
        a.family = family_from_string(c.value("family", "Other")).value_or(CaseFamily::Other);
        a.patterns.push_back(compile(alias_regex(a.id)));
        for (const auto& al : c.value("aliases", json::array()))
            a.patterns.push_back(compile(alias_regex(al.get<std::string>())));
        out.aliases_.push_back(std::move(a));
    }
    return out;
}

CaseAliases CaseAliases::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

CaseAliases CaseAliases::load_default() { return load(util::data_dir() / "case_aliases.json"); }

std::optional<CaseAliases::Hit> CaseAliases::find(const std::string& text) const {
    std::optional<Hit> best;
    for (const auto& a : aliases_) {
        for (const auto& re : a.patterns) {
            std::smatch m;
            if (std::regex_search(text, m, re)) {
                const auto pos = static_cast<std::size_t>(m.position(0));
                if (!best || pos < best->position) best = Hit{&a, pos};
            }
        }
    }
    return best;
}

const CaseAlias* CaseAliases::by_id(const std::string& id) const {
    for (const auto& a : aliases_)
        if (a.id == id) return &a;
    return nullptr;
}

}  // namespace pfagent::intent
