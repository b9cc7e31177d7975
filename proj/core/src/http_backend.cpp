#include "editflip/http_backend.hpp"

#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"

namespace editflip {

using nlohmann::json;

RateLimiter::RateLimiter(double requests_per_second)
    : min_interval_s_(requests_per_second > 0.0 ? 1.0 / requests_per_second : 0.0),
      next_slot_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (min_interval_s_ <= 0.0) {
        return;
    }
    std::chrono::steady_clock::time_point wake;
    {
        std::lock_guard<std::mutex> lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        if (next_slot_ < now) {
            next_slot_ = now;
        }
        wake = next_slot_;
        next_slot_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(min_interval_s_));
    }
    std::this_thread::sleep_until(wake);
}

namespace {

struct HttpCore {
    HttpBackendSpec spec;
    std::shared_ptr<RateLimiter> limiter;
    std::unique_ptr<httplib::Client> client;
    std::mutex mu_;  // httplib clients are not safe for concurrent requests

    HttpCore(HttpBackendSpec s, std::shared_ptr<RateLimiter> l)
        : spec(std::move(s)), limiter(std::move(l)) {
        if (spec.base_url.rfind("http://", 0) != 0 && spec.base_url.rfind("https://", 0) != 0) {
            throw ConfigError("backend base_url must start with http:// or https://, got \"" +
                              spec.base_url + "\"");
        }
        while (!spec.base_url.empty() && spec.base_url.back() == '/') {
            spec.base_url.pop_back();
        }
        client = std::make_unique<httplib::Client>(spec.base_url);
        const auto timeout = std::chrono::milliseconds(std::max(spec.timeout_ms, 1));
        client->set_connection_timeout(timeout);
        client->set_read_timeout(timeout);
        client->set_write_timeout(timeout);
        if (!spec.auth_env.empty()) {
            const char* token = std::getenv(spec.auth_env.c_str());
            if (token == nullptr || *token == '\0') {
                throw ConfigError("environment variable " + spec.auth_env +
                                  " named by the backend config is not set");
            }
            client->set_default_headers(
                {{"Authorization", std::string("Bearer ") + token}});
        }
    }

    /// POST with retries: transport failures, 429, and 5xx retry with
    /// exponential backoff plus jitter; other non-2xx statuses fail fast.
    json post_json(const std::string& path, const json& body) {
        std::string last_failure = "no attempt made";
        for (int attempt = 0; attempt < std::max(spec.max_attempts, 1); ++attempt) {
            if (attempt > 0) {
                backoff_sleep(attempt - 1);
            }
            if (limiter) {
                limiter->acquire();
            }
            httplib::Result res = [&] {
                std::lock_guard<std::mutex> lock(mu_);
                return client->Post(path, body.dump(), "application/json");
            }();
            if (!res) {
                std::ostringstream msg;
                msg << "transport error: " << httplib::to_string(res.error());
                last_failure = msg.str();
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                std::ostringstream msg;
                msg << "status " << res->status;
                last_failure = msg.str();
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                std::ostringstream msg;
                msg << "POST " << spec.base_url << path << " failed with status " << res->status
                    << ": " << res->body;
                throw BackendError(msg.str());
            }
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                std::ostringstream msg;
                msg << "POST " << spec.base_url << path
                    << " returned a non-JSON body: " << e.what();
                throw ProtocolError(msg.str());
            }
        }
        std::ostringstream msg;
        msg << "POST " << spec.base_url << path << " failed after " << spec.max_attempts
            << " attempts (" << last_failure << ")";
        throw BackendError(msg.str());
    }

    void backoff_sleep(int retry_index) {
        thread_local std::mt19937 rng{std::random_device{}()};
        const double base = static_cast<double>(spec.backoff_initial_ms) *
                            static_cast<double>(1 << std::min(retry_index, 10));
        std::uniform_real_distribution<double> jitter(0.0, base * 0.5);
        const auto delay = std::chrono::duration<double, std::milli>(base + jitter(rng));
        std::this_thread::sleep_for(delay);
    }
};

}  // namespace

struct HttpEditGenerator::Impl : HttpCore {
    using HttpCore::HttpCore;
};

HttpEditGenerator::HttpEditGenerator(HttpBackendSpec spec, std::shared_ptr<RateLimiter> limiter)
    : impl_(std::make_unique<Impl>(std::move(spec), std::move(limiter))) {}

HttpEditGenerator::~HttpEditGenerator() = default;

std::string HttpEditGenerator::generate(const EditProposalRequest& request) {
    json body;
    if (!impl_->spec.model.empty()) {
        body["model"] = impl_->spec.model;
    }
    body["messages"] = json::array({json{{"role", "user"}, {"content", render_edit_prompt(request)}}});
    const json response = impl_->post_json("/v1/chat/completions", body);
    try {
        const json& choice = response.at("choices").at(0);
        if (choice.contains("message")) {
            return choice.at("message").at("content").get<std::string>();
        }
        return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("chat-completions response missing assistant text: ") +
                            e.what());
    }
}

struct HttpScorer::Impl : HttpCore {
    using HttpCore::HttpCore;
};

HttpScorer::HttpScorer(HttpBackendSpec spec, std::shared_ptr<RateLimiter> limiter)
    : impl_(std::make_unique<Impl>(std::move(spec), std::move(limiter))) {}

HttpScorer::~HttpScorer() = default;

TokenLogprobs HttpScorer::score_continuation(const std::string& context,
                                             const std::string& continuation,
                                             const std::string& image_ref) {
    json body{{"context", context}, {"continuation", continuation}};
    if (!image_ref.empty()) {
        body["image_ref"] = image_ref;
    }
    const json response = impl_->post_json(impl_->spec.score_path, body);
    try {
        TokenLogprobs result;
        result.tokens = response.at("tokens").get<std::vector<std::string>>();
        result.logprobs = response.at("logprobs").get<std::vector<double>>();
        result.context_len = response.at("context_len").get<std::size_t>();
        result.raw_logits = response.value("raw_logits", false);
        return result;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("score response malformed: ") + e.what());
    }
}

struct HttpEmbedder::Impl : HttpCore {
    using HttpCore::HttpCore;
};

HttpEmbedder::HttpEmbedder(HttpBackendSpec spec, std::shared_ptr<RateLimiter> limiter)
    : impl_(std::make_unique<Impl>(std::move(spec), std::move(limiter))) {}

HttpEmbedder::~HttpEmbedder() = default;

EmbeddingVector HttpEmbedder::embed(const std::string& text) {
    const json response = impl_->post_json("/embed", json{{"input", text}});
    try {
        EmbeddingVector vec;
        vec.values = response.at("embedding").get<std::vector<double>>();
        return vec;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("embed response malformed: ") + e.what());
    }
}

}  // namespace editflip
