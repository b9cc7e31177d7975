#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <memory>
#include <random>
#include <thread>

#include "editflip/errors.hpp"
#include "editflip/gateway.hpp"
#include "editflip/mocks.hpp"
#include "editflip/util.hpp"

using namespace editflip;

namespace {

/// Generator stub that returns one fixed text regardless of the request.
class FixedTextGenerator : public EditGeneratorBackend {
public:
    explicit FixedTextGenerator(std::string text) : text_(std::move(text)) {}
    std::string generate(const EditProposalRequest&) override { return text_; }

private:
    std::string text_;
};

/// Scorer stub returning a canned response, for protocol-violation tests.
class CannedScorer : public ScorerBackend {
public:
    explicit CannedScorer(TokenLogprobs response) : response_(std::move(response)) {}
    TokenLogprobs score_continuation(const std::string&, const std::string&,
                                     const std::string&) override {
        return response_;
    }

private:
    TokenLogprobs response_;
};

}  // namespace

TEST_CASE("parse_edit_pairs handles the numbered mixed-separator form") {
    auto pairs = parse_edit_pairs("1. (lesion , mass)\n2. (\"benign\" -> \"non-malignant\")");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0] == EditPair{"lesion", "mass"});
    CHECK(pairs[1] == EditPair{"benign", "non-malignant"});
}

TEST_CASE("parse_edit_pairs accepts the minimal pair") {
    auto pairs = parse_edit_pairs("(a,b)");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0] == EditPair{"a", "b"});
}

TEST_CASE("parse_edit_pairs tolerates chatter, bullets, and single quotes") {
    auto pairs = parse_edit_pairs(
        "Sure, here are some options:\n"
        "- ('Is the', 'Could the')\n"
        "* (benign or malignant -> harmless or dangerous)\n"
        "Those should work well!");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0] == EditPair{"Is the", "Could the"});
    CHECK(pairs[1] == EditPair{"benign or malignant", "harmless or dangerous"});
}

TEST_CASE("parse_edit_pairs keeps internal whitespace and trims the outside") {
    auto pairs = parse_edit_pairs("(  the small lesion ,  a  tiny  mass  )");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0] == EditPair{"the small lesion", "a  tiny  mass"});
}

TEST_CASE("parse_edit_pairs keeps commas inside quotes intact") {
    auto pairs = parse_edit_pairs("(\"red, swollen\" -> \"pale\")");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0] == EditPair{"red, swollen", "pale"});
}

TEST_CASE("parse_edit_pairs returns invalid pairs for the caller to filter") {
    auto pairs = parse_edit_pairs("1. (benign -> benign)");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].prev == pairs[0].next);
}

TEST_CASE("parse_edit_pairs throws with the raw text attached when nothing parses") {
    CHECK_THROWS_AS(parse_edit_pairs("no edits possible"), ProposalParseError);
    try {
        parse_edit_pairs("no edits possible");
    } catch (const ProposalParseError& e) {
        CHECK(e.raw_text() == "no edits possible");
    }
}

TEST_CASE("propose_edits echoes a scripted mock in order") {
    ScriptedEditGenerator generator;
    generator.script("Is the lesion benign?",
                     {{"lesion", "mass"}, {"Is", "Could it be"}, {"?", "??"}});
    EditProposalRequest request;
    request.current_question = "Is the lesion benign?";
    ProposalBatch batch = propose_edits(generator, request);
    REQUIRE(batch.edits.size() == 3);
    CHECK(batch.edits[0] == EditPair{"lesion", "mass"});
    CHECK(batch.edits[1] == EditPair{"Is", "Could it be"});
    CHECK(batch.edits[2] == EditPair{"?", "??"});
    CHECK(batch.parsed == 3);
}

TEST_CASE("propose_edits drops pairs already in the history") {
    ScriptedEditGenerator generator;
    generator.script("q", {{"lesion", "mass"}, {"Is", "Could it be"}, {"?", "??"}});
    EditHistory history;
    history.insert({"lesion", "mass"});
    EditProposalRequest request;
    request.current_question = "q";
    request.history = &history;
    ProposalBatch batch = propose_edits(generator, request);
    REQUIRE(batch.edits.size() == 2);
    CHECK(batch.edits[0] == EditPair{"Is", "Could it be"});
    CHECK(batch.duplicates == 1);
}

TEST_CASE("propose_edits filters invalid pairs into the EmptyProposal signal") {
    FixedTextGenerator generator("1. (benign -> benign)");
    EditProposalRequest request;
    request.current_question = "q";
    ProposalBatch batch = propose_edits(generator, request);
    CHECK(batch.edits.empty());
    CHECK(batch.parsed == 1);
    CHECK(batch.invalid == 1);
}

TEST_CASE("propose_edits truncates to num_edits") {
    FixedTextGenerator generator("(a,b)\n(c,d)\n(e,f)\n(g,h)");
    EditProposalRequest request;
    request.current_question = "a c e g";
    request.num_edits = 2;
    ProposalBatch batch = propose_edits(generator, request);
    CHECK(batch.edits.size() == 2);
    CHECK(batch.parsed == 4);
}

TEST_CASE("propose_edits rejects a non-positive edit budget") {
    FixedTextGenerator generator("(a,b)");
    EditProposalRequest request;
    request.current_question = "a";
    request.num_edits = 0;
    CHECK_THROWS_AS(propose_edits(generator, request), ConfigError);
}

TEST_CASE("the rendered prompt carries question, history, and the edit rules") {
    EditHistory history;
    history.insert({"lesion", "mass"});
    EditProposalRequest request;
    request.current_question = "Is the lesion benign?";
    request.history = &history;
    request.num_edits = 3;
    std::string prompt = render_edit_prompt(request);
    CHECK(prompt.find("Is the lesion benign?") != std::string::npos);
    CHECK(prompt.find("(\"lesion\" , \"mass\")") != std::string::npos);
    CHECK(prompt.find("synonym") != std::string::npos);
    CHECK(prompt.find("punctuation") != std::string::npos);
    CHECK(prompt.find("word-order") != std::string::npos);
    CHECK(prompt.find("labels") != std::string::npos);
    CHECK(prompt.find("do not propose these again") != std::string::npos);
    CHECK(prompt.find("{question}") == std::string::npos);
    CHECK(prompt.find("{history}") == std::string::npos);
    CHECK(prompt.find("{num_edits}") == std::string::npos);
}

TEST_CASE("the prompt template hash tracks the template text") {
    CHECK(edit_prompt_template_hash() == fnv1a64(edit_prompt_template()));
    CHECK(edit_prompt_template_version() == "q-edit-v1");
}

TEST_CASE("masking identity: continuation sum equals total minus prefix") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> logprob(-8.0, 0.0);
    for (int i = 0; i < 2000; ++i) {
        TokenLogprobs scored;
        std::uniform_int_distribution<std::size_t> count(1, 24);
        std::size_t n = count(rng);
        for (std::size_t t = 0; t < n; ++t) {
            scored.tokens.push_back("t" + std::to_string(t));
            scored.logprobs.push_back(logprob(rng));
        }
        scored.context_len = std::uniform_int_distribution<std::size_t>(0, n)(rng);
        double prefix = 0.0;
        for (std::size_t t = 0; t < scored.context_len; ++t) {
            prefix += scored.logprobs[t];
        }
        CHECK(scored.continuation_sum() ==
              doctest::Approx(scored.total_sum() - prefix).epsilon(1e-12));
        CHECK(scored.continuation_tokens() == n - scored.context_len);
    }
}

TEST_CASE("checked scoring enforces the wire contract") {
    auto make = [](std::vector<std::string> tokens, std::vector<double> logprobs,
                   std::size_t context_len, bool raw) {
        TokenLogprobs out;
        out.tokens = std::move(tokens);
        out.logprobs = std::move(logprobs);
        out.context_len = context_len;
        out.raw_logits = raw;
        return out;
    };

    SUBCASE("well-formed responses pass through") {
        CannedScorer backend(make({"q", "a"}, {-0.5, -1.0}, 1, false));
        TokenLogprobs scored = score_continuation(backend, "q", "a", "");
        CHECK(scored.continuation_sum() == doctest::Approx(-1.0));
    }
    SUBCASE("empty continuation is rejected before the call") {
        CannedScorer backend(make({"q", "a"}, {-0.5, -1.0}, 1, false));
        CHECK_THROWS_AS(score_continuation(backend, "q", "", ""), ProtocolError);
    }
    SUBCASE("length mismatch") {
        CannedScorer backend(make({"q", "a"}, {-0.5}, 1, false));
        CHECK_THROWS_AS(score_continuation(backend, "q", "a", ""), ProtocolError);
    }
    SUBCASE("context_len out of range") {
        CannedScorer backend(make({"q", "a"}, {-0.5, -1.0}, 3, false));
        CHECK_THROWS_AS(score_continuation(backend, "q", "a", ""), ProtocolError);
    }
    SUBCASE("no continuation tokens") {
        CannedScorer backend(make({"q", "a"}, {-0.5, -1.0}, 2, false));
        CHECK_THROWS_AS(score_continuation(backend, "q", "a", ""), ProtocolError);
    }
    SUBCASE("positive logprobs without the raw-logit flag") {
        CannedScorer backend(make({"q", "a"}, {-0.5, 0.7}, 1, false));
        CHECK_THROWS_AS(score_continuation(backend, "q", "a", ""), ProtocolError);
    }
    SUBCASE("positive values pass with the raw-logit flag") {
        CannedScorer backend(make({"q", "a"}, {0.0, 0.7}, 1, true));
        CHECK(score_continuation(backend, "q", "a", "").continuation_sum() ==
              doctest::Approx(0.7));
    }
    SUBCASE("non-finite logprobs") {
        CannedScorer backend(
            make({"q", "a"}, {-0.5, std::numeric_limits<double>::infinity()}, 1, true));
        CHECK_THROWS_AS(score_continuation(backend, "q", "a", ""), ProtocolError);
    }
}

TEST_CASE("embedder gateway caches per distinct text") {
    auto backend = std::make_shared<MockEmbedder>(8, 1);
    EmbedderGateway gateway(backend);
    const EmbeddingVector& a = gateway.embed("alpha");
    const EmbeddingVector& b = gateway.embed("beta");
    const EmbeddingVector& a2 = gateway.embed("alpha");
    CHECK(&a == &a2);
    CHECK(a.dim() == 8);
    CHECK(b.dim() == 8);
    CHECK(gateway.cache_size() == 2);
    CHECK(gateway.backend_calls() == 2);
    CHECK(backend->call_count() == 2);
}

TEST_CASE("embedder gateway stays consistent under concurrent use") {
    auto backend = std::make_shared<MockEmbedder>(4, 9);
    EmbedderGateway gateway(backend);
    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&gateway, &mismatches]() {
            for (int i = 0; i < 200; ++i) {
                const EmbeddingVector& vec = gateway.embed("text-" + std::to_string(i % 10));
                if (vec.dim() != 4) {
                    mismatches.fetch_add(1);
                }
            }
        });
    }
    for (auto& thread : threads) {
        thread.join();
    }
    CHECK(mismatches.load() == 0);
    CHECK(gateway.cache_size() == 10);
}

TEST_CASE("embedder gateway rejects dimension drift") {
    class DriftingEmbedder : public EmbedderBackend {
    public:
        EmbeddingVector embed(const std::string&) override {
            EmbeddingVector vec;
            vec.values.assign(calls_++ == 0 ? 4 : 5, 0.25);
            return vec;
        }

    private:
        int calls_ = 0;
    };
    EmbedderGateway gateway(std::make_shared<DriftingEmbedder>());
    gateway.embed("first");
    CHECK_THROWS_AS(gateway.embed("second"), ProtocolError);
}
