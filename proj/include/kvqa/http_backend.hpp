#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "kvqa/backend.hpp"

namespace kvqa {

inline constexpr const char* kProtocolVersion = "1";

struct RetryPolicy {
    std::size_t attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
};

// Client for the JSON-over-HTTP model protocol. One POST endpoint per
// operation under /v1/; every request and response carries
// "protocol_version": "1". Transport failures and 5xx responses are retried
// with exponential backoff, then raised as TransportError. A 4xx response is
// raised as BackendError at once. Responses missing fields raise
// MalformedOutputError.
class HttpBackend final : public ModelBackend {
public:
    // base_url like "http://127.0.0.1:8080".
    explicit HttpBackend(std::string base_url, RetryPolicy retry = {},
                         std::chrono::seconds timeout = std::chrono::seconds(60));

    ScoredAnswer vlm_answer(const std::string& image_ref, const std::string& prompt,
                            const GenerationParams& params) override;
    std::string vlm_caption(const std::string& image_ref) override;
    Embedding vlm_encode(const std::string& image_ref, const std::string& question) override;
    std::string generate(GenerateRole role, const std::string& prompt, const GenerationParams& params) override;
    Embedding text_embed(const std::string& text) override;
    double image_text_similarity(const std::string& image_ref, const std::string& text) override;
    EntailmentScores entail_scores(const std::string& premise, const std::string& hypothesis) override;

    nlohmann::json post(const std::string& endpoint, nlohmann::json body) const;

private:
    std::string base_url_;
    RetryPolicy retry_;
    std::chrono::seconds timeout_;
};

// Serves a backend over the same protocol; used by tests and `kvqa serve-mock`.
class BackendServer {
public:
    explicit BackendServer(std::shared_ptr<ModelBackend> backend);
    ~BackendServer();
    BackendServer(const BackendServer&) = delete;
    BackendServer& operator=(const BackendServer&) = delete;

    // Binds to a free port and returns it.
    int bind_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    // Blocks until stop() is called.
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace kvqa
