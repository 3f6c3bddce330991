#include "pfagent/execution/script.hpp"

#include <regex>

#include "pfagent/util/text.hpp"

namespace pfagent::execution {

namespace {

struct Fences {
    int complete = 0;
    std::string last_complete;
    bool dangling = false;          // an opening fence without a close
    std::string dangling_body;
};

bool is_fence(const std::string& line) { return util::trim(line).rfind("```", 0) == 0; }

Fences scan_fences(const std::string& text) {
    Fences f;
    bool open = false;
    std::string body;
    for (const auto& line : util::split_lines(text)) {
        if (is_fence(line)) {
            if (!open) {
                open = true;
                body.clear();
            } else {
                open = false;
                ++f.complete;
                f.last_complete = body;
            }
            continue;
        }
        if (open) body += line + "\n";
    }
    if (open) {
        f.dangling = true;
        f.dangling_body = body;
    }
    return f;
}

const std::regex kImportPfsim(R"((^|\n)[ \t]*(import[ \t]+pfsim\b|from[ \t]+pfsim[ \t]+import\b))");
const std::regex kImportJson(R"((^|\n)[ \t]*import[ \t]+([\w, \t]*,[ \t]*)?json\b)");

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::Model: return "Model";
        case Provenance::Template: return "Template";
        case Provenance::Repair: return "Repair";
    }
    return "Model";
}

int count_fenced_blocks(const std::string& text) { return scan_fences(text).complete; }

std::string fence(const std::string& code) {
    std::string body = code;
    if (!body.empty() && body.back() != '\n') body += '\n';
    return "```python\n" + body + "```\n";
}

GeneratedScript normalize_response(const std::string& response, Provenance provenance, int attempt_index) {
    GeneratedScript s;
    s.raw_response = response;
    s.provenance = provenance;
    s.attempt_index = attempt_index;

    const Fences f = scan_fences(response);
    s.raw_fenced_blocks = f.complete;
    std::string code;
    if (f.complete > 0) {
        code = f.last_complete;
        if (f.complete > 1)
            s.normalization_notes.push_back("kept last of " + std::to_string(f.complete) + " fenced blocks");
    } else if (f.dangling) {
        code = f.dangling_body;
        s.normalization_notes.push_back("unterminated fence; kept its body");
    } else {
        code = response;
        s.normalization_notes.push_back("no fenced block; treated whole response as code");
    }
    if (!code.empty() && code.back() != '\n') code += '\n';

    const bool has_result = code.find("RESULT_JSON") != std::string::npos;
    std::string header;
    if (!std::regex_search(code, kImportJson) && (!has_result || code.find("json.") != std::string::npos)) {
        header += "import json\n";
        s.normalization_notes.push_back("injected import json");
    }
    if (!std::regex_search(code, kImportPfsim)) {
        header += "import pfsim\n";
        s.normalization_notes.push_back("injected import pfsim");
    }
    code = header + code;
    if (!has_result) {
        code += "print(\"RESULT_JSON: \" + json.dumps({}))\n";
        s.result_line_appended = true;
        s.normalization_notes.push_back("appended empty RESULT_JSON line");
    }
    s.code = code;
    s.fenced_block_count = 1;
    return s;
}

std::string normalize_text(const std::string& response) {
    return fence(normalize_response(response, Provenance::Model, 1).code);
}

}  // namespace pfagent::execution
