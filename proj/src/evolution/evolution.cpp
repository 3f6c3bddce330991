#include "pfagent/evolution/evolution.hpp"

#include <algorithm>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "pfagent/util/files.hpp"
#include "pfagent/util/paths.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::evolution {

namespace fs = std::filesystem;

namespace {

std::vector<std::regex> compile_all(const std::vector<std::string>& patterns, const std::string& owner) {
    std::vector<std::regex> out;
    for (const auto& p : patterns) {
        try {
            out.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
            throw Error("InvalidPattern", "signature " + owner + ": pattern '" + p + "' does not compile: " + e.what());
        }
    }
    return out;
}

bool any_match(const std::vector<std::regex>& res, const std::string& text) {
    for (const auto& re : res)
        if (std::regex_search(text, re)) return true;
    return false;
}

template <class T>
void push_unique(std::vector<T>& v, const T& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

json read_json(const fs::path& path, const std::string& what) {
    json doc = json::parse(util::read_file(path), nullptr, false);
    if (doc.is_discarded()) throw Error("ConfigError", what + " " + path.string() + " is not valid JSON");
    return doc;
}

void add_examples(RootCause& rc, const std::vector<std::string>& refs) {
    for (const auto& r : refs) {
        if (rc.examples.size() >= kMaxExamples) break;
        push_unique(rc.examples, r);
    }
}

/// Exclusive advisory lock on "<path>.lock" for the lifetime of the object.
class FileLock {
public:
    explicit FileLock(const fs::path& target) {
        if (target.has_parent_path()) fs::create_directories(target.parent_path());
        const std::string lock_path = target.string() + ".lock";
        fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error("PersistenceFailure", "cannot open lock file " + lock_path);
        while (::flock(fd_, LOCK_EX) != 0) {
            if (errno != EINTR) {
                ::close(fd_);
                throw Error("PersistenceFailure", "cannot lock " + lock_path);
            }
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace

std::string FailureRecord::ref() const { return scenario_id + "#" + std::to_string(turn_index); }

std::string FailureRecord::attribution_text() const {
    std::string t = error_text.value_or("");
    for (const auto& d : failed_dimensions) t += (t.empty() ? "" : "\n") + std::string("[failed: ") + d + "]";
    return t;
}

bool FailureRecord::valid() const {
    return (error_text && !error_text->empty()) || (human_issue && !human_issue->empty()) || !failed_dimensions.empty();
}

json FailureRecord::to_json() const {
    return {{"origin", origin == FailureOrigin::Benchmark ? "Benchmark" : "Deployment"},
            {"prompt_text", prompt_text},
            {"error_text", error_text ? json(*error_text) : json(nullptr)},
            {"human_issue", human_issue ? json(*human_issue) : json(nullptr)},
            {"failed_dimensions", failed_dimensions},
            {"scenario_id", scenario_id},
            {"turn", turn_index}};
}

FailureRecord FailureRecord::from_json(const json& j) {
    FailureRecord r;
    r.origin = j.value("origin", "Benchmark") == "Deployment" ? FailureOrigin::Deployment : FailureOrigin::Benchmark;
    r.prompt_text = j.value("prompt_text", "");
    if (j.contains("error_text") && j["error_text"].is_string()) r.error_text = j["error_text"].get<std::string>();
    if (j.contains("human_issue") && j["human_issue"].is_string()) r.human_issue = j["human_issue"].get<std::string>();
    r.failed_dimensions = j.value("failed_dimensions", std::vector<std::string>{});
    r.scenario_id = j.value("scenario_id", "");
    r.turn_index = j.value("turn", 0);
    return r;
}

bool FailureSignature::matches(const FailureRecord& r) const {
    if (any_match(p_re, r.prompt_text)) return true;
    const std::string err = r.attribution_text();
    if (!err.empty() && any_match(e_re, err)) return true;
    return r.human_issue && !r.human_issue->empty() && any_match(i_re, *r.human_issue);
}

SignatureLibrary SignatureLibrary::from_json(const json& doc) {
    SignatureLibrary lib;
    const json& list = doc.is_array() ? doc : doc.at("signatures");
    for (const auto& s : list) {
        FailureSignature sig;
        sig.signature_id = s.at("signature_id").get<std::string>();
        sig.P = s.value("P", std::vector<std::string>{});
        sig.E = s.value("E", std::vector<std::string>{});
        sig.I = s.value("I", std::vector<std::string>{});
        sig.linked_packs = s.value("linked_packs", std::vector<std::string>{});
        lib.add(std::move(sig));
    }
    return lib;
}

SignatureLibrary SignatureLibrary::load(const fs::path& path) { return from_json(read_json(path, "signature library")); }

SignatureLibrary SignatureLibrary::load_default() { return load(util::data_dir() / "evolution" / "signatures.json"); }

const FailureSignature* SignatureLibrary::find(const std::string& id) const {
    for (const auto& s : signatures_)
        if (s.signature_id == id) return &s;
    return nullptr;
}

void SignatureLibrary::add(FailureSignature sig) {
    if (sig.P.empty() && sig.E.empty() && sig.I.empty())
        throw Error("InvalidSignature", "signature " + sig.signature_id + " has no patterns");
    if (find(sig.signature_id)) throw Error("InvalidSignature", "duplicate signature " + sig.signature_id);
    sig.p_re = compile_all(sig.P, sig.signature_id);
    sig.e_re = compile_all(sig.E, sig.signature_id);
    sig.i_re = compile_all(sig.I, sig.signature_id);
    signatures_.push_back(std::move(sig));
}

PackRegistry PackRegistry::from_json(const json& doc) {
    PackRegistry reg;
    const json& list = doc.is_array() ? doc : doc.at("packs");
    for (const auto& p : list) {
        ConstraintPack pack;
        pack.pack_id = p.at("pack_id").get<std::string>();
        pack.guidance = p.value("guidance", std::vector<std::string>{});
        for (const auto& o : p.value("pattern_overrides", json::array())) pack.pattern_overrides.push_back(o);
        pack.marker_overrides = p.value("marker_overrides", std::vector<std::string>{});
        pack.activation_count = p.value("activation_count", 0);
        reg.add(std::move(pack));
    }
    return reg;
}

PackRegistry PackRegistry::load(const fs::path& path) { return from_json(read_json(path, "pack registry")); }

PackRegistry PackRegistry::load_default() { return load(util::data_dir() / "evolution" / "packs.json"); }

const ConstraintPack* PackRegistry::find(const std::string& id) const {
    for (const auto& p : packs_)
        if (p.pack_id == id) return &p;
    return nullptr;
}

void PackRegistry::add(ConstraintPack pack) {
    if (pack.guidance.empty() && pack.pattern_overrides.empty() && pack.marker_overrides.empty())
        throw Error("InvalidPack", "pack " + pack.pack_id + " is empty");
    if (find(pack.pack_id)) throw Error("InvalidPack", "duplicate pack " + pack.pack_id);
    packs_.push_back(std::move(pack));
}

Activations attribute_failures(const std::vector<FailureRecord>& records, const SignatureLibrary& library) {
    Activations out;
    for (const auto& r : records) {
        bool hit = false;
        for (const auto& sig : library.signatures()) {
            if (!sig.matches(r)) continue;
            out[sig.signature_id].push_back(r);
            hit = true;
        }
        if (!hit) out[kUnattributed].push_back(r);
    }
    return out;
}

json EvolutionProfile::to_json() const {
    json summary = json::object();
    for (const auto& [id, rc] : root_cause_summary) summary[id] = {{"count", rc.count}, {"examples", rc.examples}};
    return {{"version", version},
            {"active_packs", active_packs},
            {"guidance", guidance},
            {"pattern_overrides", pattern_overrides},
            {"marker_overrides", marker_overrides},
            {"root_cause_summary", summary}};
}

EvolutionProfile EvolutionProfile::from_json(const json& j) {
    try {
        if (!j.is_object()) throw Error("CorruptProfile", "profile is not an object");
        EvolutionProfile p;
        p.version = j.at("version").get<long long>();
        // Load-time normalization: duplicates collapse to the first occurrence.
        for (const auto& s : j.at("active_packs").get<std::vector<std::string>>()) push_unique(p.active_packs, s);
        for (const auto& s : j.at("guidance").get<std::vector<std::string>>()) push_unique(p.guidance, s);
        for (const auto& o : j.value("pattern_overrides", json::array())) push_unique(p.pattern_overrides, json(o));
        for (const auto& s : j.value("marker_overrides", std::vector<std::string>{})) push_unique(p.marker_overrides, s);
        const json summary = j.value("root_cause_summary", json::object());
        for (const auto& [id, rc] : summary.items()) {
            RootCause r;
            r.count = rc.at("count").get<long long>();
            if (r.count < 0) throw Error("CorruptProfile", "negative count for " + id);
            for (const auto& e : rc.value("examples", std::vector<std::string>{})) push_unique(r.examples, e);
            if (r.examples.size() > kMaxExamples) r.examples.resize(kMaxExamples);
            p.root_cause_summary[id] = r;
        }
        return p;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error("CorruptProfile", std::string("malformed profile: ") + e.what());
    }
}

EvolutionProfile update_profile(const EvolutionProfile& profile, const Activations& activations,
                                const SignatureLibrary& library, const PackRegistry& packs) {
    EvolutionProfile out = profile;
    for (const auto& [sig_id, records] : activations) {
        if (records.empty()) continue;
        std::vector<std::string> refs;
        for (const auto& r : records) refs.push_back(r.ref());
        auto& rc = out.root_cause_summary[sig_id];
        rc.count += static_cast<long long>(records.size());
        add_examples(rc, refs);
        if (sig_id == kUnattributed) continue;
        const auto* sig = library.find(sig_id);
        if (!sig) continue;   // signature removed from the library since attribution
        for (const auto& pack_id : sig->linked_packs) {
            const auto* pack = packs.find(pack_id);
            if (!pack) throw UnknownPack(pack_id);
            push_unique(out.active_packs, pack_id);
            for (const auto& g : pack->guidance) push_unique(out.guidance, g);
            for (const auto& o : pack->pattern_overrides) push_unique(out.pattern_overrides, o);
            for (const auto& m : pack->marker_overrides) push_unique(out.marker_overrides, m);
        }
    }
    out.version = profile.version + 1;
    return out;
}

EvolutionProfile merge_profiles(const EvolutionProfile& a, const EvolutionProfile& b) {
    // Lists are rebuilt so duplicates already inside either input go too.
    EvolutionProfile out;
    for (const EvolutionProfile* p : {&a, &b}) {
        for (const auto& s : p->active_packs) push_unique(out.active_packs, s);
        for (const auto& s : p->guidance) push_unique(out.guidance, s);
        for (const auto& o : p->pattern_overrides) push_unique(out.pattern_overrides, o);
        for (const auto& s : p->marker_overrides) push_unique(out.marker_overrides, s);
        for (const auto& [id, rc] : p->root_cause_summary) {
            auto& dst = out.root_cause_summary[id];
            dst.count += rc.count;
            add_examples(dst, rc.examples);
        }
    }
    out.version = std::max(a.version, b.version) + 1;
    return out;
}

knowledge::AdaptiveRuleSet load_active_rules(const EvolutionProfile& profile) {
    knowledge::AdaptiveRuleSet rules;
    rules.guidance = profile.guidance;
    rules.source_packs = profile.active_packs;
    return rules;
}

void apply_overrides(const EvolutionProfile& profile, intent::Vocabulary& vocab) {
    for (const auto& o : profile.pattern_overrides) vocab.add_pattern_override(o);
    for (const auto& m : profile.marker_overrides) vocab.add_marker_override(m);
}

ProfileStore::ProfileStore(fs::path path) : path_(std::move(path)) {}

fs::path ProfileStore::queue_path() const { return fs::path(path_.string() + ".queue.ndjson"); }

EvolutionProfile ProfileStore::load() const {
    last_error_.reset();
    std::error_code ec;
    if (!fs::exists(path_, ec)) return {};
    try {
        json doc = json::parse(util::read_file(path_), nullptr, false);
        if (doc.is_discarded()) throw Error("CorruptProfile", "profile is not valid JSON");
        return EvolutionProfile::from_json(doc);
    } catch (const Error& e) {
        last_error_ = e.kind() + ": " + e.what();
        spdlog::warn("evolution profile {} ignored ({}); starting from an empty rule set", path_.string(), e.what());
        return {};
    }
}

void ProfileStore::keep_corrupt_copy() const {
    if (!last_error_) return;
    std::error_code ec;
    fs::copy_file(path_, fs::path(path_.string() + ".corrupt"), fs::copy_options::overwrite_existing, ec);
}

void ProfileStore::save(const EvolutionProfile& p) const { util::write_file_atomic(path_, p.to_json().dump(2) + "\n"); }

EvolutionProfile ProfileStore::update(const std::function<EvolutionProfile(const EvolutionProfile&)>& fn) const {
    FileLock lock(path_);
    const EvolutionProfile current = load();
    keep_corrupt_copy();
    const EvolutionProfile next = fn(current);
    save(next);
    return next;
}

void ProfileStore::enqueue(const FailureRecord& r) const {
    FileLock lock(path_);
    util::append_file(queue_path(), r.to_json().dump() + "\n");
}

std::vector<FailureRecord> ProfileStore::queued() const {
    std::vector<FailureRecord> out;
    std::error_code ec;
    if (!fs::exists(queue_path(), ec)) return out;
    for (const auto& line : util::split_lines(util::read_file(queue_path()))) {
        if (util::trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            spdlog::warn("skipping malformed queued failure record in {}", queue_path().string());
            continue;
        }
        out.push_back(FailureRecord::from_json(j));
    }
    return out;
}

EvolutionProfile ProfileStore::apply_queue(const SignatureLibrary& library, const PackRegistry& packs) const {
    FileLock lock(path_);
    const auto records = queued();
    const EvolutionProfile current = load();
    keep_corrupt_copy();
    const EvolutionProfile next = update_profile(current, attribute_failures(records, library), library, packs);
    save(next);
    std::error_code ec;
    fs::remove(queue_path(), ec);
    return next;
}

}  // namespace pfagent::evolution
