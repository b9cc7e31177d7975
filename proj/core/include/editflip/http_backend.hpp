#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "editflip/gateway.hpp"

namespace editflip {

/// Connection details for one remote model endpoint. `auth_env` names an
/// environment variable holding a bearer token; empty means no auth header.
/// `score_path` only matters for scorer roles and lets two scorer roles
/// (target model, fluency evaluator) share one host under different routes.
struct HttpBackendSpec {
    std::string base_url;  // scheme://host[:port]
    std::string auth_env;
    std::string model;  // forwarded in chat-completions requests
    std::string score_path = "/score";
    int timeout_ms = 30000;
    int max_attempts = 3;
    int backoff_initial_ms = 250;
};

/// Paces outgoing requests to at most `requests_per_second`, shared by all
/// HTTP clients of one run. Non-positive rates disable pacing. Thread-safe.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second);

    /// Blocks until the caller may send one request.
    void acquire();

private:
    double min_interval_s_;
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_slot_;
};

/// Remote edit generator speaking a chat-completions-style protocol:
/// POST {base_url}/v1/chat/completions with the rendered edit prompt as a
/// single user message; the assistant message text is returned raw.
class HttpEditGenerator : public EditGeneratorBackend {
public:
    HttpEditGenerator(HttpBackendSpec spec, std::shared_ptr<RateLimiter> limiter = nullptr);
    ~HttpEditGenerator() override;

    std::string generate(const EditProposalRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Remote scorer: POST {base_url}{score_path} with {context, continuation,
/// image_ref?}, expecting {tokens, logprobs, context_len, raw_logits?}.
class HttpScorer : public ScorerBackend {
public:
    HttpScorer(HttpBackendSpec spec, std::shared_ptr<RateLimiter> limiter = nullptr);
    ~HttpScorer() override;

    TokenLogprobs score_continuation(const std::string& context, const std::string& continuation,
                                     const std::string& image_ref) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Remote embedder: POST {base_url}/embed with {input}, expecting
/// {embedding: [..]}.
class HttpEmbedder : public EmbedderBackend {
public:
    HttpEmbedder(HttpBackendSpec spec, std::shared_ptr<RateLimiter> limiter = nullptr);
    ~HttpEmbedder() override;

    EmbeddingVector embed(const std::string& text) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace editflip
