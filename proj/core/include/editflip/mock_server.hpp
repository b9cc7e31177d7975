#pragma once

#include <memory>
#include <string>

#include "editflip/gateway.hpp"

namespace editflip {

/// Serves in-process backends over loopback HTTP so the remote-client code
/// paths can be exercised end to end without real models. Routes are only
/// registered for the roles a backend was supplied for:
///   POST /v1/chat/completions  -> generator (prompt text parsed back into
///                                 an EditProposalRequest)
///   POST /score                -> scorer
///   POST /eval/score           -> evaluator (same protocol, second role)
///   POST /embed                -> embedder
///   GET  /healthz              -> liveness probe
class MockServer {
public:
    MockServer(std::shared_ptr<EditGeneratorBackend> generator,
               std::shared_ptr<ScorerBackend> scorer,
               std::shared_ptr<ScorerBackend> evaluator,
               std::shared_ptr<EmbedderBackend> embedder);
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    /// Binds and starts serving on a background thread. port 0 picks an
    /// ephemeral port. Returns the bound port; throws Error on bind failure.
    int start(const std::string& host = "127.0.0.1", int port = 0);

    /// Stops the server and joins the background thread. Idempotent.
    void stop();

    int port() const;
    std::string base_url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace editflip
