#include "pfagent/execution/provider.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace pfagent::execution {

using nlohmann::json;

std::string to_string(ProviderMode m) {
    switch (m) {
        case ProviderMode::BaseModel: return "BaseModel";
        case ProviderMode::FineTuned: return "FineTuned";
        case ProviderMode::Mock: return "Mock";
        case ProviderMode::TemplateGate: return "TemplateGate";
    }
    return "Mock";
}

ScriptedProvider::ScriptedProvider(std::vector<std::string> responses, std::string name)
    : responses_(std::move(responses)), name_(std::move(name)) {}

std::string ScriptedProvider::complete(const std::vector<ChatMessage>& messages) {
    std::lock_guard lock(mu_);
    history_.push_back(messages);
    if (responses_.empty()) throw ProviderError("scripted provider has no responses");
    const std::size_t i = std::min(calls_, responses_.size() - 1);
    ++calls_;
    return responses_[i];
}

std::size_t ScriptedProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::vector<std::vector<ChatMessage>> ScriptedProvider::history() const {
    std::lock_guard lock(mu_);
    return history_;
}

HttpCompletionProvider::HttpCompletionProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.api_key.empty()) {
        if (const char* k = std::getenv("PFAGENT_API_KEY")) cfg_.api_key = k;
    }
}

std::string HttpCompletionProvider::complete(const std::vector<ChatMessage>& messages) {
    if (cfg_.api_key.empty()) throw ProviderError("no API key; set PFAGENT_API_KEY");

    // Split "scheme://host[:port]" from the path prefix.
    const auto scheme_end = cfg_.endpoint.find("://");
    const auto path_begin = cfg_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = cfg_.endpoint.substr(0, path_begin);
    std::string prefix = path_begin == std::string::npos ? "" : cfg_.endpoint.substr(path_begin);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    json body = {{"model", cfg_.model}, {"temperature", cfg_.temperature}, {"messages", json::array()}};
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

    httplib::Client client(origin);
    client.set_connection_timeout(cfg_.timeout);
    client.set_read_timeout(cfg_.timeout);
    client.set_write_timeout(cfg_.timeout);
    const httplib::Headers headers{{"Authorization", "Bearer " + cfg_.api_key}};
    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw ProviderError("request to " + origin + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));

    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw ProviderError("provider returned invalid JSON");
    const auto& choices = doc.value("choices", json::array());
    if (choices.empty() || !choices[0].contains("message"))
        throw ProviderError("provider response has no choices");
    std::string text = choices[0]["message"].value("content", "");
    if (text.empty()) throw Error("EmptyResponse", "provider returned an empty completion");
    return text;
}

}  // namespace pfagent::execution
