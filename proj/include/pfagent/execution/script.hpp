#pragma once

#include <string>
#include <vector>

namespace pfagent::execution {

enum class Provenance { Model, Template, Repair };

std::string to_string(Provenance p);

struct GeneratedScript {
    std::string code;                 // normalized, without fences
    std::string raw_response;         // what the provider (or gate) returned
    int raw_fenced_blocks = 0;        // complete fenced blocks in raw_response
    int fenced_block_count = 1;       // after normalization
    Provenance provenance = Provenance::Model;
    int attempt_index = 1;
    bool result_line_appended = false;
    std::vector<std::string> normalization_notes;
};

/// Number of complete ``` fenced blocks in `text`.
int count_fenced_blocks(const std::string& text);

/// Keep the last complete fenced block (or the whole text when there is
/// none), inject missing imports and append an empty structured-result line
/// if the code never prints one.
GeneratedScript normalize_response(const std::string& response, Provenance provenance, int attempt_index);

/// `code` wrapped as a single fenced python block.
std::string fence(const std::string& code);

/// normalize_response(r) rendered back to text; idempotent.
std::string normalize_text(const std::string& response);

}  // namespace pfagent::execution
