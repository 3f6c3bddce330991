#include "pfagent/intent/parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "pfagent/util/text.hpp"

namespace pfagent::intent {

namespace {

bool any_match(const std::vector<std::regex>& res, const std::string& text) {
    return std::any_of(res.begin(), res.end(),
                       [&](const std::regex& re) { return std::regex_search(text, re); });
}

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

/// Positions where `name` occurs in `text` as a whole token.
std::vector<std::size_t> file_mentions(const std::string& text, const std::string& name) {
    std::vector<std::size_t> out;
    if (name.empty()) return out;
    for (auto pos = text.find(name); pos != std::string::npos; pos = text.find(name, pos + 1)) {
        const bool left_ok = pos == 0 || !is_name_char(text[pos - 1]);
        const auto end = pos + name.size();
        // a trailing sentence period is fine, a longer file name is not
        const bool right_ok = end >= text.size() || !is_name_char(text[end]) ||
                              (text[end] == '.' && (end + 1 >= text.size() || !is_name_char(text[end + 1])));
        if (left_ok && right_ok) out.push_back(pos);
    }
    return out;
}

CaseFamily family_for_upload(const std::string& file, const CaseAliases& aliases) {
    std::string spaced = file;
    for (char& c : spaced)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = ' ';
    if (auto hit = aliases.find(spaced)) return hit->alias->family;
    return CaseFamily::Other;
}

std::string strip_trailing_punct(std::string s) {
    while (!s.empty() && std::string_view(".,;:!?)").find(s.back()) != std::string_view::npos) s.pop_back();
    return s;
}

struct Capture {
    std::string text;
    Span span;
    bool matched = false;
};

double number_or_throw(const Capture& c, const std::string& what) {
    const auto v = util::parse_number(strip_trailing_punct(c.text));
    if (!v || !std::isfinite(*v))
        throw MalformedParam(c.span, "cannot read " + what + " from '" + c.text + "'");
    return *v;
}

int bus_or_throw(const Capture& c) {
    const double v = number_or_throw(c, "a bus number");
    if (v != std::floor(v) || v < 0 || v > 1e9)
        throw MalformedParam(c.span, "bus number must be a whole number, got '" + c.text + "'");
    return static_cast<int>(v);
}

json parse_param(const ParamSpec& spec, const std::vector<Capture>& caps, bool& present) {
    present = true;
    if (spec.unit == "const") return spec.value;
    for (int g : spec.groups)
        if (g <= 0 || static_cast<std::size_t>(g) >= caps.size() || !caps[g].matched) {
            present = false;
            return nullptr;
        }
    const Capture& c = caps[spec.groups.front()];
    if (spec.unit == "factor") {
        std::string t = strip_trailing_punct(c.text);
        const bool percent = !t.empty() && t.back() == '%';
        if (percent) t.pop_back();
        else if (!t.empty() && (t.back() == 'x' || t.back() == 'X')) t.pop_back();
        const auto v = util::parse_number(t);
        if (!v || !std::isfinite(*v)) throw MalformedParam(c.span, "cannot read a scale factor from '" + c.text + "'");
        return percent ? *v / 100.0 : *v;
    }
    if (spec.unit == "percent_increase") return 1.0 + number_or_throw(c, "a percentage") / 100.0;
    if (spec.unit == "voltage_pu") return number_or_throw(c, "a per-unit voltage");
    if (spec.unit == "threshold") return number_or_throw(c, "a threshold");
    if (spec.unit == "power_mw") {
        const double v = number_or_throw(c, "a power value");
        std::string unit;
        if (spec.unit_group > 0 && static_cast<std::size_t>(spec.unit_group) < caps.size() && caps[spec.unit_group].matched)
            unit = util::to_lower(caps[spec.unit_group].text);
        // plain numbers are megawatts on a 100 MVA base
        return (unit == "pu" || unit == "p.u.") ? v : v / 100.0;
    }
    if (spec.unit == "bus") return bus_or_throw(c);
    if (spec.unit == "bus_pair") {
        if (spec.groups.size() != 2) throw Error("InvalidVocabulary", "bus_pair needs two groups");
        return json::array({bus_or_throw(caps[spec.groups[0]]), bus_or_throw(caps[spec.groups[1]])});
    }
    if (spec.unit == "line_list") {
        static const std::regex sep("\\s*(?:,\\s*and\\s+|,|\\s+and\\s+)\\s*", std::regex::icase);
        json out = json::array();
        const std::string body = strip_trailing_punct(c.text);
        for (std::sregex_token_iterator it(body.begin(), body.end(), sep, -1), end; it != end; ++it) {
            const std::string tok = util::trim(it->str());
            if (tok.empty()) continue;
            out.push_back(tok);
        }
        if (out.empty()) throw MalformedParam(c.span, "empty candidate list");
        return out;
    }
    throw Error("InvalidVocabulary", "unknown unit '" + spec.unit + "'");
}

struct Candidate {
    std::size_t begin, length, entry;
    std::vector<Capture> caps;
};

}  // namespace

RequestKind classify_request(const std::string& text, const TurnContext& ctx, const Vocabulary& vocab) {
    const auto& c = vocab.classifier();
    if (any_match(c.code_markers, text)) return RequestKind::RunnableCode;
    if (ctx.prior_error && any_match(c.debug_phrases, text)) return RequestKind::DebuggingInsight;
    if (any_match(c.explain_markers, text)) return RequestKind::ConceptualExplanation;
    return RequestKind::RunnableCode;
}

std::optional<CaseReference> detect_case_source(const std::string& text,
                                                const std::vector<std::string>& workspace_files,
                                                const std::vector<std::string>& attached_files,
                                                const std::optional<CaseReference>& active_case,
                                                const CaseAliases& aliases) {
    std::string stripped = text;
    std::optional<std::pair<std::size_t, std::string>> uploaded;
    for (const auto& f : workspace_files) {
        for (auto pos : file_mentions(text, f)) {
            if (!uploaded || pos < uploaded->first) uploaded = {pos, f};
            std::fill(stripped.begin() + static_cast<std::ptrdiff_t>(pos),
                      stripped.begin() + static_cast<std::ptrdiff_t>(pos + f.size()), ' ');
        }
    }
    if (!uploaded && !attached_files.empty()) uploaded = {0, attached_files.front()};

    const auto hit = aliases.find(stripped);
    if (uploaded) {
        CaseReference ref{CaseSource::Uploaded, uploaded->second, family_for_upload(uploaded->second, aliases)};
        if (hit && hit->alias->family != ref.family)
            throw Error("AmbiguousCase", "the message names both the uploaded file '" + ref.identifier +
                                             "' and the built-in case '" + hit->alias->id +
                                             "'; say which one to use");
        return ref;
    }
    if (hit) return CaseReference{CaseSource::BuiltIn, hit->alias->id, hit->alias->family};
    return active_case;
}

std::vector<IntentMarker> extract_markers(const std::string& text, const Vocabulary& vocab) {
    std::vector<Candidate> cands;
    const auto& entries = vocab.entries();
    for (std::size_t e = 0; e < entries.size(); ++e) {
        for (std::sregex_iterator it(text.begin(), text.end(), entries[e].re), end; it != end; ++it) {
            const auto& m = *it;
            if (m.length(0) == 0) continue;
            Candidate c{static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.length(0)), e, {}};
            for (std::size_t g = 0; g < m.size(); ++g) {
                Capture cap;
                cap.matched = m[g].matched;
                if (cap.matched) {
                    cap.text = m[g].str();
                    cap.span = {static_cast<std::size_t>(m.position(g)),
                                static_cast<std::size_t>(m.position(g) + m.length(g))};
                }
                c.caps.push_back(std::move(cap));
            }
            cands.push_back(std::move(c));
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.length != b.length) return a.length > b.length;
        if (a.begin != b.begin) return a.begin < b.begin;
        return a.entry < b.entry;
    });
    std::vector<const Candidate*> chosen;
    for (const auto& c : cands) {
        const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const Candidate* o) {
            return c.begin < o->begin + o->length && o->begin < c.begin + c.length;
        });
        if (!overlaps) chosen.push_back(&c);
    }
    std::sort(chosen.begin(), chosen.end(), [](const Candidate* a, const Candidate* b) { return a->begin < b->begin; });

    std::vector<IntentMarker> out;
    for (const Candidate* c : chosen) {
        const auto& entry = entries[c->entry];
        IntentMarker m;
        m.marker = entry.marker;
        m.span = {c->begin, c->begin + c->length};
        for (const auto& spec : entry.params) {
            bool present = false;
            json v = parse_param(spec, c->caps, present);
            if (present) m.params[spec.name] = v;
        }
        if (m.marker == MarkerKind::LoadAddition && m.params.contains("p") && !m.params.contains("q"))
            m.params["q"] = 0.0;
        out.push_back(std::move(m));
    }
    return out;
}

ParsedObjective parse_turn(const UserTurn& turn, SessionIntentState& state, const Vocabulary& vocab,
                           const CaseAliases& aliases, const std::vector<std::string>& workspace_files) {
    if (util::trim(turn.text).empty()) throw Error("EmptyTurn", "turn text is empty");
    if (turn.turn_index <= state.last_turn_index)
        throw Error("TurnOrder", "turn index " + std::to_string(turn.turn_index) + " is not after " +
                                     std::to_string(state.last_turn_index));

    ParsedObjective obj;
    obj.turn_index = turn.turn_index;
    obj.request_type = classify_request(turn.text, TurnContext{state.prior_error}, vocab);
    obj.case_ref = detect_case_source(turn.text, workspace_files, turn.attached_files, state.active_case, aliases);
    obj.markers = extract_markers(turn.text, vocab);

    // modifications made to a different case do not carry over
    obj.ledger = (obj.case_ref == state.active_case) ? state.ledger : ModificationLedger{};
    bool complete = true;
    for (const auto& m : obj.markers) {
        const bool ok = params_complete(m.marker, m.params);
        complete = complete && ok;
        if (obj.request_type == RequestKind::RunnableCode && ok && is_modification(m.marker))
            obj.ledger.append({turn.turn_index, m.marker, m.params});
    }
    obj.coding_gate_triggered =
        obj.request_type == RequestKind::RunnableCode && obj.case_ref.has_value() && complete;

    state.ledger = obj.ledger;
    state.active_case = obj.case_ref;
    state.last_turn_index = turn.turn_index;
    return obj;
}

}  // namespace pfagent::intent
