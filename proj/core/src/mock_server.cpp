#include "editflip/mock_server.hpp"

#include <chrono>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"

namespace editflip {

using nlohmann::json;

namespace {

/// Recovers the structured request from the rendered prompt, using the
/// template's fixed section markers. Returns false when the text does not
/// look like an edit prompt at all.
bool parse_edit_prompt(const std::string& prompt, EditProposalRequest& request,
                       EditHistory& history) {
    static const std::string count_marker = "Propose exactly ";
    static const std::string question_marker = "Current question:\n";
    static const std::string history_marker = "(do not propose these again):\n";
    static const std::string answer_marker = "\n\nAnswer with one edit per line";

    const std::size_t count_pos = prompt.find(count_marker);
    const std::size_t question_pos = prompt.find(question_marker);
    const std::size_t history_pos = prompt.find(history_marker);
    const std::size_t answer_pos = prompt.find(answer_marker);
    if (count_pos == std::string::npos || question_pos == std::string::npos ||
        history_pos == std::string::npos || answer_pos == std::string::npos) {
        return false;
    }

    request.num_edits = std::atoi(prompt.c_str() + count_pos + count_marker.size());
    if (request.num_edits <= 0) {
        return false;
    }

    const std::size_t question_start = question_pos + question_marker.size();
    const std::size_t question_end = prompt.find("\n\nEdits already tried", question_start);
    if (question_end == std::string::npos) {
        return false;
    }
    request.current_question = prompt.substr(question_start, question_end - question_start);

    const std::size_t history_start = history_pos + history_marker.size();
    const std::string history_text = prompt.substr(history_start, answer_pos - history_start);
    if (history_text != "(none)") {
        try {
            for (const EditPair& pair : parse_edit_pairs(history_text)) {
                history.insert(pair);
            }
        } catch (const ProposalParseError&) {
            // Unrecognized history section; treat as empty rather than
            // rejecting the request.
        }
    }
    request.history = &history;
    return true;
}

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, json{{"error", message}});
}

/// Maps gateway exceptions onto HTTP statuses: caller mistakes are 400,
/// upstream trouble is 502, everything else 500.
template <typename Fn>
void guard(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ProtocolError& e) {
        reply_error(res, 400, e.what());
    } catch (const ConfigError& e) {
        reply_error(res, 400, e.what());
    } catch (const BackendError& e) {
        reply_error(res, 502, e.what());
    } catch (const Error& e) {
        reply_error(res, 500, e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
    }
}

json score_to_json(const TokenLogprobs& lp) {
    return json{{"tokens", lp.tokens},
                {"logprobs", lp.logprobs},
                {"context_len", lp.context_len},
                {"raw_logits", lp.raw_logits}};
}

}  // namespace

struct MockServer::Impl {
    std::shared_ptr<EditGeneratorBackend> generator;
    std::shared_ptr<ScorerBackend> scorer;
    std::shared_ptr<ScorerBackend> evaluator;
    std::shared_ptr<EmbedderBackend> embedder;

    httplib::Server server;
    std::thread worker;
    std::string host = "127.0.0.1";
    int bound_port = 0;

    void register_routes() {
        server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            reply_json(res, 200, json{{"status", "ok"}});
        });

        if (generator) {
            server.Post("/v1/chat/completions",
                        [this](const httplib::Request& req, httplib::Response& res) {
                            guard(res, [&] { handle_chat(req, res); });
                        });
        }
        if (scorer) {
            server.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
                guard(res, [&] { handle_score(*scorer, req, res); });
            });
        }
        if (evaluator) {
            server.Post("/eval/score",
                        [this](const httplib::Request& req, httplib::Response& res) {
                            guard(res, [&] { handle_score(*evaluator, req, res); });
                        });
        }
        if (embedder) {
            server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
                guard(res, [&] { handle_embed(req, res); });
            });
        }
    }

    void handle_chat(const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("messages") || body["messages"].empty()) {
            reply_error(res, 400, "expected a chat-completions body with messages");
            return;
        }
        const json& last = body["messages"].back();
        if (!last.contains("content") || !last["content"].is_string()) {
            reply_error(res, 400, "last message has no text content");
            return;
        }

        EditProposalRequest request;
        EditHistory history;
        if (!parse_edit_prompt(last["content"].get<std::string>(), request, history)) {
            reply_error(res, 400, "message content is not a recognizable edit prompt");
            return;
        }
        const std::string text = generator->generate(request);
        reply_json(res, 200,
                   json{{"choices",
                         json::array({json{{"message",
                                            json{{"role", "assistant"}, {"content", text}}}}})}});
    }

    void handle_score(ScorerBackend& backend, const httplib::Request& req,
                      httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("context") || !body.contains("continuation")) {
            reply_error(res, 400, "expected {context, continuation, image_ref?}");
            return;
        }
        const TokenLogprobs lp = backend.score_continuation(
            body["context"].get<std::string>(), body["continuation"].get<std::string>(),
            body.value("image_ref", std::string{}));
        reply_json(res, 200, score_to_json(lp));
    }

    void handle_embed(const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("input") || !body["input"].is_string()) {
            reply_error(res, 400, "expected {input: string}");
            return;
        }
        const EmbeddingVector vec = embedder->embed(body["input"].get<std::string>());
        reply_json(res, 200, json{{"embedding", vec.values}, {"dim", vec.dim()}});
    }
};

MockServer::MockServer(std::shared_ptr<EditGeneratorBackend> generator,
                       std::shared_ptr<ScorerBackend> scorer,
                       std::shared_ptr<ScorerBackend> evaluator,
                       std::shared_ptr<EmbedderBackend> embedder)
    : impl_(std::make_unique<Impl>()) {
    impl_->generator = std::move(generator);
    impl_->scorer = std::move(scorer);
    impl_->evaluator = std::move(evaluator);
    impl_->embedder = std::move(embedder);
    impl_->register_routes();
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
    if (impl_->worker.joinable()) {
        throw Error("mock server is already running");
    }
    impl_->host = host;
    if (port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(host);
        if (impl_->bound_port <= 0) {
            throw Error("mock server failed to bind an ephemeral port on " + host);
        }
    } else {
        if (!impl_->server.bind_to_port(host, port)) {
            throw Error("mock server failed to bind " + host + ":" + std::to_string(port));
        }
        impl_->bound_port = port;
    }
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    for (int i = 0; i < 2000 && !impl_->server.is_running(); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    if (!impl_->server.is_running()) {
        stop();
        throw Error("mock server did not become ready");
    }
    return impl_->bound_port;
}

void MockServer::stop() {
    if (impl_->worker.joinable()) {
        impl_->server.stop();
        impl_->worker.join();
    }
}

int MockServer::port() const { return impl_->bound_port; }

std::string MockServer::base_url() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->bound_port);
}

}  // namespace editflip
