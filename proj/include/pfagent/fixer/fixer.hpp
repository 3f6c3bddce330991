#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pfagent/evolution/evolution.hpp"
#include "pfagent/execution/provider.hpp"
#include "pfagent/execution/sandbox.hpp"
#include "pfagent/reporting/log.hpp"

namespace pfagent::fixer {

struct RepoChunk {
    std::string path;          // relative to the indexed root
    int chunk_index = 0;
    std::size_t begin = 0;     // byte offsets into the file
    std::size_t end = 0;
    std::string text;
};

struct ScoredChunk {
    const RepoChunk* chunk = nullptr;
    double score = 0.0;
};

/// Chunked text of a source tree, searchable by exact token overlap.
class RepoIndex {
public:
    /// Throws Error("InvalidArgument") unless 0 <= overlap < chunk.
    static RepoIndex build(const std::filesystem::path& root, std::size_t chunk_chars = 1200,
                           std::size_t overlap_chars = 200);

    /// Highest-scoring chunks for `terms` (earlier terms weigh more). A term
    /// found among a chunk's path components adds kPathBoost.
    std::vector<ScoredChunk> search(const std::vector<std::string>& terms, std::size_t k = 6) const;

    const std::vector<RepoChunk>& chunks() const { return chunks_; }
    const std::vector<std::string>& skipped_binary() const { return skipped_binary_; }
    std::size_t chunk_chars() const { return chunk_chars_; }
    std::size_t overlap_chars() const { return overlap_chars_; }

    static constexpr double kPathBoost = 3.0;

private:
    std::vector<RepoChunk> chunks_;
    std::vector<std::vector<std::string>> tokens_;        // sorted, unique, per chunk
    std::vector<std::vector<std::string>> path_tokens_;   // sorted, unique, per chunk
    std::vector<std::string> skipped_binary_;
    std::size_t chunk_chars_ = 1200;
    std::size_t overlap_chars_ = 200;
};

/// [begin, end) offsets of the chunks of a `size`-byte file.
std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t size, std::size_t chunk, std::size_t overlap);

/// Exception names, quoted identifiers, backend API names and device
/// identifiers, ranked by (found in the error, frequency, length).
std::vector<std::string> extract_signal_terms(const std::string& error_text, const std::string& failing_code);

struct FixRequest {
    std::string user_message;
    std::string agent_response;
    std::string failing_code;
    std::string output_and_errors;
    std::vector<std::string> workspace_files;
    std::string case_identifier_and_config;
    int turn_index = 0;

    bool valid() const;
};

/// Six context sources in fixed order, then repository excerpts with their
/// paths, then instructions. Repository excerpts are dropped lowest rank
/// first to stay within `budget_chars`; the six sources are never cut.
std::string assemble_fix_prompt(const FixRequest& request, const std::vector<ScoredChunk>& repo_items,
                                std::size_t budget_chars = 24000);

struct FixAttempt {
    int iteration = 1;
    std::string repaired_code;
    std::optional<execution::ExecutionRecord> validation;
    bool succeeded = false;
};

enum class FixFinal { Fixed, BestEffort };

std::string to_string(FixFinal f);

struct FixOutcome {
    std::vector<FixAttempt> attempts;
    FixFinal final = FixFinal::BestEffort;
    int iterations_used = 0;
    bool validated_locally = false;
    std::string remaining_error;        // empty when fixed
    std::optional<std::string> provider_error;

    nlohmann::json to_json() const;
};

struct RepairOptions {
    bool validate_locally = true;
    int retry_limit = 3;
    std::size_t top_k = 6;
    std::filesystem::path workspace;    // required when validating
    util::ProcessLimits limits;
};

FixOutcome repair_loop(const FixRequest& request, execution::CompletionProvider& provider, const RepoIndex* index,
                       const RepairOptions& options);

struct FixEventResult {
    std::string fix_id;
    std::optional<std::string> note;            // for Fixed outcomes
    std::vector<std::string> queued_signatures; // for BestEffort outcomes
};

/// Append the fix event (and, for BestEffort, a queued failure record or an
/// unattributed feedback event) to the session log.
FixEventResult record_fix_event(const FixOutcome& outcome, const FixRequest& request, reporting::SessionLog& log,
                                const evolution::SignatureLibrary& library, const evolution::ProfileStore* store);

}  // namespace pfagent::fixer
