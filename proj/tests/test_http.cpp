#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"
#include "editflip/gateway.hpp"
#include "editflip/http_backend.hpp"
#include "editflip/mock_server.hpp"
#include "editflip/mocks.hpp"
#include "editflip/quality.hpp"
#include "editflip/runner.hpp"
#include "editflip/scoring.hpp"
#include "test_support.hpp"

using namespace editflip;
using editflip::testing::make_instance;
using editflip::testing::read_file;
using editflip::testing::TempDir;
using editflip::testing::write_file;

namespace {

class RecordingGenerator : public EditGeneratorBackend {
public:
    std::string reply = "1. (tumor -> growth)\n";
    std::string seen_question;
    int seen_num_edits = 0;
    std::vector<EditPair> seen_history;

    std::string generate(const EditProposalRequest& request) override {
        seen_question = request.current_question;
        seen_num_edits = request.num_edits;
        seen_history = request.history ? request.history->pairs() : std::vector<EditPair>{};
        return reply;
    }
};

class FlakyScorer : public ScorerBackend {
public:
    FlakyScorer(std::shared_ptr<ScorerBackend> inner, int failures)
        : inner_(std::move(inner)), failures_left_(failures) {}

    TokenLogprobs score_continuation(const std::string& context, const std::string& continuation,
                                     const std::string& image_ref) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        if (failures_left_.fetch_sub(1, std::memory_order_relaxed) > 0) {
            throw BackendError("synthetic upstream outage");
        }
        return inner_->score_continuation(context, continuation, image_ref);
    }

    int calls() const { return calls_.load(std::memory_order_relaxed); }
    void set_failures(int n) { failures_left_.store(n, std::memory_order_relaxed); }

private:
    std::shared_ptr<ScorerBackend> inner_;
    std::atomic<int> failures_left_;
    std::atomic<int> calls_{0};
};

std::shared_ptr<MockScorer> two_option_scorer(double truth_base, double other_base) {
    auto scorer = std::make_shared<MockScorer>();
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {truth_base, other_base};
    config.rules = {{"lesion", 1, 0.9}};
    scorer->set_default_config(config);
    return scorer;
}

HttpBackendSpec quick_spec(const std::string& base_url) {
    HttpBackendSpec spec;
    spec.base_url = base_url;
    spec.backoff_initial_ms = 1;
    return spec;
}

/// Bare httplib server for handcrafted responses, stopped on scope exit.
class ScopedRawServer {
public:
    httplib::Server server;

    int start() {
        port_ = server.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) {
            return port_;
        }
        worker_ = std::thread([this] { server.listen_after_bind(); });
        for (int i = 0; i < 2000 && !server.is_running(); ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        return server.is_running() ? port_ : -1;
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    ~ScopedRawServer() {
        server.stop();
        if (worker_.joinable()) {
            worker_.join();
        }
    }

private:
    int port_ = 0;
    std::thread worker_;
};

}  // namespace

TEST_CASE("the remote scorer relays the mock's scores exactly") {
    auto mock = two_option_scorer(0.4, 0.1);
    MockServer server(nullptr, mock, nullptr, nullptr);
    server.start();
    HttpScorer remote(quick_spec(server.base_url()));

    TokenLogprobs direct = mock->score_continuation("is there a lesion", "no", "img-1");
    TokenLogprobs relayed = remote.score_continuation("is there a lesion", "no", "img-1");
    CHECK(relayed.tokens == direct.tokens);
    CHECK(relayed.logprobs == direct.logprobs);
    CHECK(relayed.context_len == direct.context_len);
    CHECK(relayed.raw_logits == direct.raw_logits);

    McqInstance instance = make_instance("i1", "is there a lesion");
    ScoreReport direct_report = score_options(*mock, instance, instance.question);
    ScoreReport remote_report = score_options(remote, instance, instance.question);
    CHECK(remote_report.option_scores == direct_report.option_scores);
    CHECK(remote_report.predicted_index == direct_report.predicted_index);
    CHECK(remote_report.margin == direct_report.margin);
}

TEST_CASE("the remote generator receives question, budget, and history intact") {
    auto recorder = std::make_shared<RecordingGenerator>();
    MockServer server(recorder, nullptr, nullptr, nullptr);
    server.start();
    HttpEditGenerator remote(quick_spec(server.base_url()));

    EditHistory history;
    history.insert({"mass", "lump"});
    history.insert({"the ", ""});
    EditProposalRequest request;
    request.current_question = "Does the scan show a mass, or fluid?";
    request.num_edits = 2;
    request.history = &history;
    request.instance_id = "diag-1";

    ProposalBatch batch = propose_edits(remote, request);
    CHECK(recorder->seen_question == request.current_question);
    CHECK(recorder->seen_num_edits == 2);
    REQUIRE(recorder->seen_history.size() == 2);
    auto saw = [&](const EditPair& pair) {
        return std::find(recorder->seen_history.begin(), recorder->seen_history.end(), pair) !=
               recorder->seen_history.end();
    };
    CHECK(saw({"mass", "lump"}));
    CHECK(saw({"the ", ""}));
    REQUIRE(batch.edits.size() == 1);
    CHECK(batch.edits[0] == EditPair{"tumor", "growth"});

    SUBCASE("history suppresses re-proposals on the client side") {
        recorder->reply = "(mass -> lump)\n(scan -> image)";
        ProposalBatch second = propose_edits(remote, request);
        REQUIRE(second.edits.size() == 1);
        CHECK(second.edits[0] == EditPair{"scan", "image"});
        CHECK(second.duplicates == 1);
        CHECK(second.parsed == 2);
    }
}

TEST_CASE("a second scorer role is served under its own route") {
    auto evaluator = std::make_shared<MockPerplexityEvaluator>(7);
    evaluator->set_uniform_logprob("clean text", -2.0);
    MockServer server(nullptr, nullptr, evaluator, nullptr);
    server.start();

    HttpBackendSpec spec = quick_spec(server.base_url());
    spec.score_path = "/eval/score";
    HttpScorer remote(spec);
    CHECK(perplexity(remote, "clean text") == doctest::Approx(std::exp(2.0)));
    CHECK(perplexity(remote, "other words here") ==
          doctest::Approx(perplexity(*evaluator, "other words here")));

    SUBCASE("the target-model route stays unregistered") {
        HttpBackendSpec wrong = quick_spec(server.base_url());
        wrong.max_attempts = 1;
        HttpScorer missing(wrong);
        try {
            missing.score_continuation("", "clean text", "");
            FAIL("expected a backend error");
        } catch (const BackendError& e) {
            CHECK(std::string(e.what()).find("404") != std::string::npos);
        }
    }
}

TEST_CASE("remote embeddings match the deterministic mock") {
    auto embedder = std::make_shared<MockEmbedder>(12, 3);
    MockServer server(nullptr, nullptr, nullptr, embedder);
    server.start();
    HttpEmbedder remote(quick_spec(server.base_url()));

    EmbeddingVector direct = embedder->embed("same text");
    EmbeddingVector relayed = remote.embed("same text");
    CHECK(relayed.values == direct.values);
    CHECK(relayed.dim() == 12);
}

TEST_CASE("transient upstream failures are retried with backoff") {
    auto flaky = std::make_shared<FlakyScorer>(two_option_scorer(0.2, 0.0), 2);
    MockServer server(nullptr, flaky, nullptr, nullptr);
    server.start();
    HttpBackendSpec spec = quick_spec(server.base_url());
    spec.max_attempts = 3;
    HttpScorer remote(spec);

    SUBCASE("two failures then success") {
        TokenLogprobs lp = remote.score_continuation("q", "yes", "");
        CHECK(lp.logprobs.size() == 2);
        CHECK(flaky->calls() == 3);
    }
    SUBCASE("a persistent outage exhausts the attempt budget") {
        flaky->set_failures(100);
        try {
            remote.score_continuation("q", "yes", "");
            FAIL("expected a backend error");
        } catch (const BackendError& e) {
            const std::string message = e.what();
            CHECK(message.find("after 3 attempts") != std::string::npos);
            CHECK(message.find("status 502") != std::string::npos);
        }
        CHECK(flaky->calls() == 3);
    }
}

TEST_CASE("caller mistakes fail fast without retries") {
    auto counting = std::make_shared<FlakyScorer>(two_option_scorer(0.2, 0.0), 0);
    MockServer server(nullptr, counting, nullptr, nullptr);
    server.start();
    HttpBackendSpec spec = quick_spec(server.base_url());
    spec.max_attempts = 5;
    HttpScorer remote(spec);

    try {
        remote.score_continuation("q", "maybe", "");
        FAIL("expected a backend error");
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()).find("status 400") != std::string::npos);
    }
    CHECK(counting->calls() == 1);
}

TEST_CASE("bearer tokens come from the named environment variable") {
    unsetenv("EDITFLIP_TEST_TOKEN");
    HttpBackendSpec spec = quick_spec("http://127.0.0.1:9");
    spec.auth_env = "EDITFLIP_TEST_TOKEN";
    try {
        HttpScorer doomed{spec};
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("EDITFLIP_TEST_TOKEN") != std::string::npos);
    }
    setenv("EDITFLIP_TEST_TOKEN", "sekrit", 1);
    CHECK_NOTHROW(HttpScorer{spec});
    unsetenv("EDITFLIP_TEST_TOKEN");

    SUBCASE("a base url without a scheme is rejected up front") {
        HttpBackendSpec bare;
        bare.base_url = "127.0.0.1:9000";
        CHECK_THROWS_AS(HttpEmbedder{bare}, ConfigError);
    }
}

TEST_CASE("the mock server exposes liveness and only the wired routes") {
    MockServer server(nullptr, two_option_scorer(0.2, 0.0), nullptr, nullptr);
    server.start();
    httplib::Client probe(server.base_url());

    httplib::Result health = probe.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(nlohmann::json::parse(health->body).at("status") == "ok");

    httplib::Result missing = probe.Post("/embed", R"({"input": "x"})", "application/json");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    httplib::Result bad_body = probe.Post("/score", "{\"context\": \"q\"}", "application/json");
    REQUIRE(bad_body);
    CHECK(bad_body->status == 400);
}

TEST_CASE("an unreachable host is reported after the configured attempts") {
    MockServer ephemeral(nullptr, two_option_scorer(0.2, 0.0), nullptr, nullptr);
    const int port = ephemeral.start();
    ephemeral.stop();

    HttpBackendSpec spec = quick_spec("http://127.0.0.1:" + std::to_string(port));
    spec.max_attempts = 2;
    spec.timeout_ms = 2000;
    HttpScorer remote(spec);
    try {
        remote.score_continuation("q", "yes", "");
        FAIL("expected a backend error");
    } catch (const BackendError& e) {
        const std::string message = e.what();
        CHECK(message.find("after 2 attempts") != std::string::npos);
        CHECK(message.find("transport error") != std::string::npos);
    }
}

TEST_CASE("malformed remote payloads are protocol errors") {
    ScopedRawServer raw;
    std::string seen_auth;
    raw.server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        res.set_content("certainly not json", "text/plain");
    });
    raw.server.Post("/half", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"tokens": ["a"]})", "application/json");
    });
    REQUIRE(raw.start() > 0);

    setenv("EDITFLIP_TEST_TOKEN", "sekrit", 1);
    HttpBackendSpec spec = quick_spec(raw.base_url());
    spec.auth_env = "EDITFLIP_TEST_TOKEN";
    spec.max_attempts = 1;
    HttpScorer garbled(spec);
    CHECK_THROWS_AS(garbled.score_continuation("q", "yes", ""), ProtocolError);
    CHECK(seen_auth == "Bearer sekrit");
    unsetenv("EDITFLIP_TEST_TOKEN");

    HttpBackendSpec half_spec = quick_spec(raw.base_url());
    half_spec.score_path = "/half";
    half_spec.max_attempts = 1;
    HttpScorer half(half_spec);
    try {
        half.score_continuation("q", "yes", "");
        FAIL("expected a protocol error");
    } catch (const ProtocolError& e) {
        CHECK(std::string(e.what()).find("malformed") != std::string::npos);
    }
}

TEST_CASE("the shared limiter paces successive requests") {
    RateLimiter limiter(50.0);
    limiter.acquire();
    const auto start = std::chrono::steady_clock::now();
    limiter.acquire();
    limiter.acquire();
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    CHECK(elapsed >= 35);
    CHECK(elapsed < 5000);

    RateLimiter unbounded(0.0);
    const auto free_start = std::chrono::steady_clock::now();
    for (int i = 0; i < 1000; ++i) {
        unbounded.acquire();
    }
    const auto free_elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - free_start)
                                  .count();
    CHECK(free_elapsed < 1000);
}

TEST_CASE("a batch run over loopback HTTP matches the in-process run byte for byte") {
    TempDir dir("http-batch");

    std::string payload;
    RunConfig direct;
    for (int i = 0; i < 4; ++i) {
        const std::string id = "flip-" + std::to_string(i);
        const std::string question = "alpha marker-" + std::to_string(i) + " please";
        payload += nlohmann::json{{"id", id},
                                  {"question", question},
                                  {"options", {"yes", "no"}},
                                  {"truth_index", 0},
                                  {"image_ref", "ref-" + id}}
                       .dump() +
                   "\n";
        MockScorerConfig config;
        config.options = {"yes", "no"};
        config.base_scores = {0.3, 1.0};
        config.rules = {{"alpha", 0, 1.0}};
        direct.scorer.instance_configs["ref-" + id] = config;
        direct.generator.scripts[question] = {{"alpha ", ""}};
    }
    payload += nlohmann::json{{"id", "stuck-0"},
                              {"question", "beta marker-s steady"},
                              {"options", {"yes", "no"}},
                              {"truth_index", 0},
                              {"image_ref", "ref-stuck-0"}}
                   .dump() +
               "\n";
    MockScorerConfig immovable;
    immovable.options = {"yes", "no"};
    immovable.base_scores = {1.0, 0.2};
    direct.scorer.instance_configs["ref-stuck-0"] = immovable;
    direct.generator.scripts["beta marker-s steady"] = {{"beta ", ""}};
    payload += nlohmann::json{{"id", "wrong-0"},
                              {"question", "gamma marker-w"},
                              {"options", {"yes", "no"}},
                              {"truth_index", 0},
                              {"image_ref", "ref-wrong-0"}}
                   .dump() +
               "\n";
    MockScorerConfig lost;
    lost.options = {"yes", "no"};
    lost.base_scores = {0.0, 1.0};
    direct.scorer.instance_configs["ref-wrong-0"] = lost;

    const std::string dataset = dir.file("dataset.jsonl");
    write_file(dataset, payload);
    direct.dataset_path = dataset;
    direct.out_dir = dir.file("direct");
    direct.seed = 9;
    direct.generator.kind = GeneratorSpec::Kind::scripted;
    direct.scorer.kind = ScorerSpec::Kind::mock;
    BatchResult direct_batch = run_batch(direct);

    std::vector<McqInstance> instances =
        load_dataset(direct.dataset_path, DatasetFormat::native_jsonl);
    BackendSet served = build_backends(direct, instances);
    MockServer server(served.generator, served.scorer, served.evaluator, served.embedder);
    server.start();

    RunConfig remote = direct;
    remote.out_dir = dir.file("remote");
    HttpBackendSpec wire = quick_spec(server.base_url());
    remote.generator.kind = GeneratorSpec::Kind::http;
    remote.generator.http = wire;
    remote.scorer.kind = ScorerSpec::Kind::http;
    remote.scorer.http = wire;
    remote.evaluator.kind = EvaluatorSpec::Kind::http;
    remote.evaluator.http = wire;
    remote.evaluator.http.score_path = "/eval/score";
    remote.embedder.kind = EmbedderSpec::Kind::http;
    remote.embedder.http = wire;
    BatchResult remote_batch = run_batch(remote);
    server.stop();

    CHECK(direct_batch.manifest.successes == 4);
    CHECK(direct_batch.manifest.skipped == 1);
    CHECK(remote_batch.manifest.errored == 0);
    CHECK(remote_batch.manifest.successes == direct_batch.manifest.successes);
    const std::string direct_bytes = read_file(dir.file("direct") + "/results.jsonl");
    CHECK(!direct_bytes.empty());
    CHECK(read_file(dir.file("remote") + "/results.jsonl") == direct_bytes);
}
