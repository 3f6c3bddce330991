#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "pfagent/execution/provider.hpp"
#include "pfagent/execution/sandbox.hpp"
#include "pfagent/execution/script.hpp"
#include "pfagent/execution/static_check.hpp"
#include "pfagent/knowledge/context.hpp"

namespace pfagent::execution {

struct AttemptRecord {
    GeneratedScript script;
    StaticCheckReport report;
};

class AttemptsExhausted : public Error {
public:
    AttemptsExhausted(const std::string& message, std::vector<AttemptRecord> attempts)
        : Error("AttemptsExhausted", message), attempts_(std::move(attempts)) {}
    const std::vector<AttemptRecord>& attempts() const noexcept { return attempts_; }

private:
    std::vector<AttemptRecord> attempts_;
};

struct RetryOutcome {
    GeneratedScript script;
    StaticCheckReport report;
    std::optional<ExecutionRecord> execution;
    std::vector<AttemptRecord> attempts;
};

using StaticChecker = std::function<StaticCheckReport(const GeneratedScript&)>;
using Executor = std::function<ExecutionRecord(const GeneratedScript&)>;
using AttemptObserver = std::function<void(const AttemptRecord&)>;

/// Messages sent to a provider for a prompt, without retry feedback.
std::vector<ChatMessage> initial_messages(const knowledge::PromptContext& prompt);

/// Text appended after a failed static check.
std::string compilation_error_signal(const StaticCheckReport& report);

/// One provider call, normalized. Throws ProviderError / Error("EmptyResponse").
GeneratedScript generate_script(const std::vector<ChatMessage>& messages, CompletionProvider& provider,
                                int attempt_index);

/// Generate, check and, if an executor is given, run the first passing
/// script. Each failed check is fed back to the provider. Throws
/// AttemptsExhausted with every attempt when none passes.
RetryOutcome run_with_retries(const knowledge::PromptContext& prompt, CompletionProvider& provider,
                              int max_attempts, const StaticChecker& check, const Executor& execute = {},
                              const AttemptObserver& on_attempt = {});

}  // namespace pfagent::execution
