#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pfagent/util/error.hpp"

namespace pfagent::execution {

enum class ProviderMode { BaseModel, FineTuned, Mock, TemplateGate };

std::string to_string(ProviderMode m);

struct ChatMessage {
    std::string role;     // system, user, assistant
    std::string content;
};

class ProviderError : public Error {
public:
    explicit ProviderError(const std::string& message) : Error("ProviderError", message) {}
};

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;
    /// Atomic completion for a chat transcript. Throws ProviderError.
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
    virtual std::string name() const = 0;
    virtual ProviderMode mode() const = 0;
};

/// Returns a fixed list of responses in order, repeating the last one.
class ScriptedProvider final : public CompletionProvider {
public:
    explicit ScriptedProvider(std::vector<std::string> responses, std::string name = "scripted");
    std::string complete(const std::vector<ChatMessage>& messages) override;
    std::string name() const override { return name_; }
    ProviderMode mode() const override { return ProviderMode::Mock; }
    std::size_t calls() const;
    /// Transcripts received so far, one entry per call.
    std::vector<std::vector<ChatMessage>> history() const;

private:
    std::vector<std::string> responses_;
    std::string name_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
    std::vector<std::vector<ChatMessage>> history_;
};

/// Wraps a callable; used for mocks whose answer depends on the prompt.
class FunctionProvider final : public CompletionProvider {
public:
    using Fn = std::function<std::string(const std::vector<ChatMessage>&)>;
    FunctionProvider(Fn fn, std::string name, ProviderMode mode = ProviderMode::Mock)
        : fn_(std::move(fn)), name_(std::move(name)), mode_(mode) {}
    std::string complete(const std::vector<ChatMessage>& messages) override { return fn_(messages); }
    std::string name() const override { return name_; }
    ProviderMode mode() const override { return mode_; }

private:
    Fn fn_;
    std::string name_;
    ProviderMode mode_;
};

struct HttpProviderConfig {
    std::string endpoint = "https://api.openai.com/v1";   // base URL of an OpenAI-compatible API
    std::string model = "gpt-4o-mini";
    double temperature = 0.0;
    std::string api_key;                                    // empty: read PFAGENT_API_KEY
    std::chrono::seconds timeout{120};
    ProviderMode mode = ProviderMode::BaseModel;
};

/// Chat-completions client for hosted or fine-tuned models.
class HttpCompletionProvider final : public CompletionProvider {
public:
    explicit HttpCompletionProvider(HttpProviderConfig cfg);
    std::string complete(const std::vector<ChatMessage>& messages) override;
    std::string name() const override { return "http:" + cfg_.model; }
    ProviderMode mode() const override { return cfg_.mode; }

private:
    HttpProviderConfig cfg_;
};

}  // namespace pfagent::execution
