#include "pfagent/execution/retry.hpp"

#include "pfagent/util/text.hpp"

namespace pfagent::execution {

std::vector<ChatMessage> initial_messages(const knowledge::PromptContext& prompt) {
    return {{"system", prompt.system_prompt}, {"user", prompt.user_message}};
}

std::string compilation_error_signal(const StaticCheckReport& report) {
    std::string out = "The previous script failed static checks:\n";
    for (const auto& m : report.messages) out += "- " + m + "\n";
    out += "Return the corrected script as exactly one fenced python block.";
    return out;
}

GeneratedScript generate_script(const std::vector<ChatMessage>& messages, CompletionProvider& provider,
                                int attempt_index) {
    const std::string response = provider.complete(messages);
    if (util::trim(response).empty()) throw Error("EmptyResponse", "provider " + provider.name() + " returned nothing");
    const Provenance prov = provider.mode() == ProviderMode::TemplateGate ? Provenance::Template : Provenance::Model;
    return normalize_response(response, prov, attempt_index);
}

RetryOutcome run_with_retries(const knowledge::PromptContext& prompt, CompletionProvider& provider, int max_attempts,
                              const StaticChecker& check, const Executor& execute, const AttemptObserver& on_attempt) {
    if (max_attempts < 1) throw Error("InvalidArgument", "max_attempts must be at least 1");
    auto messages = initial_messages(prompt);
    RetryOutcome out;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        AttemptRecord rec;
        rec.script = generate_script(messages, provider, attempt);
        rec.report = check(rec.script);
        out.attempts.push_back(rec);
        if (on_attempt) on_attempt(rec);
        if (rec.report.pass()) {
            out.script = rec.script;
            out.report = rec.report;
            if (execute) out.execution = execute(out.script);
            return out;
        }
        messages.push_back({"assistant", rec.script.raw_response});
        messages.push_back({"user", compilation_error_signal(rec.report)});
    }
    throw AttemptsExhausted("no script passed static checks in " + std::to_string(max_attempts) + " attempt(s)",
                            std::move(out.attempts));
}

}  // namespace pfagent::execution
