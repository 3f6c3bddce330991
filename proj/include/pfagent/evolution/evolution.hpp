#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfagent/intent/vocabulary.hpp"
#include "pfagent/knowledge/context.hpp"
#include "pfagent/util/error.hpp"

namespace pfagent::evolution {

using nlohmann::json;

enum class FailureOrigin { Benchmark, Deployment };

struct FailureRecord {
    FailureOrigin origin = FailureOrigin::Benchmark;
    std::string prompt_text;
    std::optional<std::string> error_text;
    std::optional<std::string> human_issue;
    std::vector<std::string> failed_dimensions;
    std::string scenario_id;   // scenario or session id
    int turn_index = 0;

    /// "<scenario>#<turn>", used as an example reference.
    std::string ref() const;
    /// Error text plus one "[failed: <dimension>]" tag per failed dimension,
    /// which is what E patterns are matched against.
    std::string attribution_text() const;
    bool valid() const;

    json to_json() const;
    static FailureRecord from_json(const json& j);
};

struct FailureSignature {
    std::string signature_id;
    std::vector<std::string> P, E, I;
    std::vector<std::string> linked_packs;
    std::vector<std::regex> p_re, e_re, i_re;

    bool matches(const FailureRecord& r) const;
};

struct ConstraintPack {
    std::string pack_id;
    std::vector<std::string> guidance;
    std::vector<json> pattern_overrides;
    std::vector<std::string> marker_overrides;
    int activation_count = 0;
};

class SignatureLibrary {
public:
    static SignatureLibrary from_json(const json& doc);
    static SignatureLibrary load(const std::filesystem::path& path);
    static SignatureLibrary load_default();
    const std::vector<FailureSignature>& signatures() const { return signatures_; }
    const FailureSignature* find(const std::string& id) const;
    void add(FailureSignature sig);

private:
    std::vector<FailureSignature> signatures_;
};

class PackRegistry {
public:
    static PackRegistry from_json(const json& doc);
    static PackRegistry load(const std::filesystem::path& path);
    static PackRegistry load_default();
    const ConstraintPack* find(const std::string& id) const;
    const std::vector<ConstraintPack>& packs() const { return packs_; }
    void add(ConstraintPack pack);

private:
    std::vector<ConstraintPack> packs_;
};

inline constexpr const char* kUnattributed = "unattributed";

/// signature id -> matching records, in input order; records matching
/// nothing go under "unattributed".
using Activations = std::map<std::string, std::vector<FailureRecord>>;

Activations attribute_failures(const std::vector<FailureRecord>& records, const SignatureLibrary& library);

struct RootCause {
    long long count = 0;
    std::vector<std::string> examples;   // at most kMaxExamples
    bool operator==(const RootCause&) const = default;
};

inline constexpr std::size_t kMaxExamples = 5;

struct EvolutionProfile {
    long long version = 0;
    std::vector<std::string> active_packs;
    std::vector<std::string> guidance;
    std::vector<json> pattern_overrides;
    std::vector<std::string> marker_overrides;
    std::map<std::string, RootCause> root_cause_summary;

    bool operator==(const EvolutionProfile&) const = default;
    json to_json() const;
    /// Throws Error("CorruptProfile") on a malformed document.
    static EvolutionProfile from_json(const json& j);
};

class UnknownPack : public Error {
public:
    explicit UnknownPack(const std::string& id) : Error("UnknownPack", "constraint pack '" + id + "' is not registered") {}
};

EvolutionProfile update_profile(const EvolutionProfile& profile, const Activations& activations,
                                const SignatureLibrary& library, const PackRegistry& packs);

EvolutionProfile merge_profiles(const EvolutionProfile& a, const EvolutionProfile& b);

knowledge::AdaptiveRuleSet load_active_rules(const EvolutionProfile& profile);

/// Feed the profile's pattern and marker overrides to a vocabulary.
void apply_overrides(const EvolutionProfile& profile, intent::Vocabulary& vocab);

/// The profile file plus a queue of failure records awaiting the next update
/// cycle. Read-modify-write cycles hold an exclusive lock on "<path>.lock".
class ProfileStore {
public:
    explicit ProfileStore(std::filesystem::path path);

    /// Snapshot of the profile. Absent file: empty profile. Corrupt file:
    /// empty profile, a warning, and `last_load_error()` set.
    EvolutionProfile load() const;
    std::optional<std::string> last_load_error() const { return last_error_; }

    void save(const EvolutionProfile& p) const;
    EvolutionProfile update(const std::function<EvolutionProfile(const EvolutionProfile&)>& fn) const;

    void enqueue(const FailureRecord& r) const;
    std::vector<FailureRecord> queued() const;
    /// Attribute and fold every queued record, then clear the queue.
    EvolutionProfile apply_queue(const SignatureLibrary& library, const PackRegistry& packs) const;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path queue_path() const;

private:
    /// A corrupt profile about to be replaced is kept as "<path>.corrupt".
    void keep_corrupt_copy() const;

    std::filesystem::path path_;
    mutable std::optional<std::string> last_error_;
};

}  // namespace pfagent::evolution
