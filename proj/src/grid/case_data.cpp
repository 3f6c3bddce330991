#include "pfagent/grid/case_data.hpp"

#include <algorithm>

#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"

#ifndef PFAGENT_BACKEND_DIR
#define PFAGENT_BACKEND_DIR "python"
#endif

namespace pfagent::grid {

using nlohmann::json;

namespace {

std::string text_id(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw Error("CaseLoadFailure", "device idx must be a string or integer");
}

template <class T>
T field(const json& row, const char* key, T fallback) {
    auto it = row.find(key);
    if (it == row.end() || it->is_null()) return fallback;
    return it->get<T>();
}

int bus_ref(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end() || !it->is_number_integer())
        throw Error("CaseLoadFailure", std::string("missing integer field '") + key + "'");
    return it->get<int>();
}

}  // namespace

std::optional<std::size_t> CaseData::bus_position(int bus) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].idx == bus) return i;
    return std::nullopt;
}

std::vector<std::size_t> CaseData::lines_between(int a, int b) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        if ((l.bus1 == a && l.bus2 == b) || (l.bus1 == b && l.bus2 == a)) out.push_back(i);
    }
    return out;
}

std::optional<std::size_t> CaseData::line_position(const std::string& idx) const {
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (lines[i].idx == idx) return i;
    return std::nullopt;
}

CaseData case_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("Bus"))
        throw Error("CaseLoadFailure", "case document has no Bus table");
    CaseData c;
    try {
        c.name = field<std::string>(doc, "name", "case");
        c.base_mva = field<double>(doc, "base_mva", 100.0);
        for (const auto& r : doc.at("Bus"))
            c.buses.push_back({bus_ref(r, "idx"), field<std::string>(r, "name", ""),
                               field<double>(r, "Vn", 1.0)});
        for (const auto& r : doc.value("Line", json::array())) {
            LineRow l;
            l.idx = text_id(r.at("idx"));
            l.bus1 = bus_ref(r, "bus1");
            l.bus2 = bus_ref(r, "bus2");
            l.r = field<double>(r, "r", 0.0);
            l.x = field<double>(r, "x", 0.0);
            l.b = field<double>(r, "b", 0.0);
            l.tap = field<double>(r, "tap", 1.0);
            l.phi = field<double>(r, "phi", 0.0);
            l.u = field<double>(r, "u", 1.0);
            c.lines.push_back(l);
        }
        for (const auto& r : doc.value("PQ", json::array()))
            c.loads.push_back({text_id(r.at("idx")), bus_ref(r, "bus"), field<double>(r, "p0", 0.0),
                               field<double>(r, "q0", 0.0), field<double>(r, "u", 1.0)});
        for (const auto& r : doc.value("PV", json::array()))
            c.pvs.push_back({text_id(r.at("idx")), bus_ref(r, "bus"), field<double>(r, "p0", 0.0),
                             field<double>(r, "v0", 1.0), field<double>(r, "u", 1.0)});
        for (const auto& r : doc.value("Slack", json::array()))
            c.slacks.push_back({text_id(r.at("idx")), bus_ref(r, "bus"), field<double>(r, "v0", 1.0),
                                field<double>(r, "a0", 0.0), field<double>(r, "u", 1.0)});
        for (const auto& r : doc.value("Shunt", json::array()))
            c.shunts.push_back({text_id(r.at("idx")), bus_ref(r, "bus"), field<double>(r, "g", 0.0),
                                field<double>(r, "b", 0.0), field<double>(r, "u", 1.0)});
    } catch (const json::exception& e) {
        throw Error("CaseLoadFailure", std::string("malformed case: ") + e.what());
    }
    return c;
}

json case_to_json(const CaseData& c) {
    json doc = {{"name", c.name}, {"base_mva", c.base_mva}};
    json& bus = doc["Bus"] = json::array();
    for (const auto& b : c.buses) bus.push_back({{"idx", b.idx}, {"name", b.name}, {"Vn", b.vn}});
    json& line = doc["Line"] = json::array();
    for (const auto& l : c.lines)
        line.push_back({{"idx", l.idx}, {"bus1", l.bus1}, {"bus2", l.bus2}, {"r", l.r}, {"x", l.x},
                        {"b", l.b}, {"tap", l.tap}, {"phi", l.phi}, {"u", l.u}});
    json& pq = doc["PQ"] = json::array();
    for (const auto& d : c.loads)
        pq.push_back({{"idx", d.idx}, {"bus", d.bus}, {"p0", d.p0}, {"q0", d.q0}, {"u", d.u}});
    json& pv = doc["PV"] = json::array();
    for (const auto& d : c.pvs)
        pv.push_back({{"idx", d.idx}, {"bus", d.bus}, {"p0", d.p0}, {"v0", d.v0}, {"u", d.u}});
    json& sl = doc["Slack"] = json::array();
    for (const auto& d : c.slacks)
        sl.push_back({{"idx", d.idx}, {"bus", d.bus}, {"v0", d.v0}, {"a0", d.a0}, {"u", d.u}});
    json& sh = doc["Shunt"] = json::array();
    for (const auto& d : c.shunts)
        sh.push_back({{"idx", d.idx}, {"bus", d.bus}, {"g", d.g}, {"b", d.b}, {"u", d.u}});
    return doc;
}

CaseData load_case_file(const std::filesystem::path& path) {
    std::string text;
    try {
        text = util::read_file(path);
    } catch (const std::exception& e) {
        throw Error("CaseLoadFailure", e.what());
    }
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
        throw Error("CaseLoadFailure", "case file " + path.string() + " is not valid JSON");
    return case_from_json(doc);
}

void save_case_file(const std::filesystem::path& path, const CaseData& data) {
    util::write_file_atomic(path, case_to_json(data).dump(1) + "\n");
}

std::filesystem::path backend_dir() {
    if (const char* env = std::getenv("PFAGENT_BACKEND_DIR"); env && *env) return env;
    return PFAGENT_BACKEND_DIR;
}

std::filesystem::path builtin_case_path(const std::string& name) {
    return backend_dir() / "pfsim" / "cases" / (name + ".json");
}

std::vector<std::string> builtin_case_names() {
    std::vector<std::string> names;
    for (const auto& f : util::list_file_names(backend_dir() / "pfsim" / "cases"))
        if (f.size() > 5 && f.ends_with(".json")) names.push_back(f.substr(0, f.size() - 5));
    return names;
}

CaseData load_builtin_case(const std::string& name) {
    const auto path = builtin_case_path(name);
    if (!std::filesystem::exists(path))
        throw Error("CaseLoadFailure", "unknown built-in case '" + name + "'");
    return load_case_file(path);
}

CaseData make_uploaded_variant(const CaseData& base, double load_factor) {
    CaseData c = base;
    for (auto& d : c.loads) {
        d.p0 *= load_factor;
        d.q0 *= load_factor;
    }
    return c;
}

}  // namespace pfagent::grid
