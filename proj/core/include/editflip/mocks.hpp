#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "editflip/gateway.hpp"
#include "editflip/mcq.hpp"

namespace editflip {

/// Additive scoring rule: when `keyword` occurs (case-sensitively) anywhere
/// in the question text being scored, `delta` is added to the logit of
/// option `option_index`.
struct MockScoreRule {
    std::string keyword;
    int option_index = 0;
    double delta = 0.0;
};

/// A deterministic scoring world for one image/instance: per-option base
/// logits plus keyword rules. The resulting logit is a pure function of the
/// question text, which makes exhaustive offline verification possible.
struct MockScorerConfig {
    std::vector<std::string> options;
    std::vector<double> base_scores;
    std::vector<MockScoreRule> rules;
};

/// Throws ConfigError on empty options, size mismatch, out-of-range rule
/// indices, or empty rule keywords.
void validate_mock_config(const MockScorerConfig& config);

/// In-process stand-in for the target model. Routes by image_ref to a
/// registered config (or the default), looks the continuation up among the
/// config's options, and emits a two-token response: one context token with
/// logprob 0 and one continuation token carrying the rule-adjusted logit
/// (declared as raw logits, so positive values are legal).
class MockScorer : public ScorerBackend {
public:
    MockScorer() = default;

    void set_default_config(MockScorerConfig config);
    /// Throws ConfigError when the image_ref is already registered.
    void add_config(const std::string& image_ref, MockScorerConfig config);

    TokenLogprobs score_continuation(const std::string& context,
                                     const std::string& continuation,
                                     const std::string& image_ref) override;

    std::size_t score_calls() const { return score_calls_.load(); }

private:
    const MockScorerConfig* config_for(const std::string& image_ref) const;

    std::unordered_map<std::string, MockScorerConfig> configs_;
    std::optional<MockScorerConfig> default_config_;
    std::atomic<std::size_t> score_calls_{0};
};

/// Computes the logit the mock scorer would assign, without a scorer
/// instance. Exposed so tests can verify scoring independently.
double mock_logit(const MockScorerConfig& config, const std::string& question,
                  std::size_t option_index);

/// Synthesizes a per-instance scoring world from the run seed. Roughly 30%
/// of instances come out misclassified from the start (truth logit 0,
/// competitors in [0.1, 0.6]); the rest are anchored correct: truth logit
/// 0.4 plus a +0.8 rule keyed on the longest word of the original question,
/// so edits that disturb the anchor can flip the prediction.
MockScorerConfig default_world_config(const McqInstance& instance, std::uint64_t seed);

/// The image_ref the default mock world registers and scores each instance
/// under ("mock://" + id), making routing independent of dataset image refs.
std::string default_world_ref(const std::string& instance_id);

/// Replays a fixed edit list for each known question text; unknown
/// questions get a fallback reply with no extractable pairs. Lines are
/// rendered in the numbered "(\"prev\" , \"new\")" form so the real parser
/// path is exercised.
class ScriptedEditGenerator : public EditGeneratorBackend {
public:
    void script(const std::string& question, std::vector<EditPair> edits);
    void set_fallback_text(std::string text);

    std::string generate(const EditProposalRequest& request) override;

    std::size_t call_count() const { return calls_.load(); }
    std::vector<std::string> questions_asked() const;

private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::vector<EditPair>> scripts_;
    std::string fallback_text_ = "No edits to suggest.";
    std::vector<std::string> asked_;
    std::atomic<std::size_t> calls_{0};
};

/// Seeded stand-in for the edit-proposal model: synonym swaps, punctuation
/// tweaks, and adjacent word swaps drawn from the current question. Each
/// instance id gets its own deterministic stream, so runs are reproducible
/// regardless of scheduling. Occasionally wraps the edit list in chatter to
/// keep the tolerant parser honest.
class RandomEditGenerator : public EditGeneratorBackend {
public:
    explicit RandomEditGenerator(std::uint64_t seed);

    std::string generate(const EditProposalRequest& request) override;

    std::size_t call_count() const { return calls_.load(); }

private:
    std::uint64_t seed_;
    std::mutex mu_;
    std::unordered_map<std::string, std::mt19937_64> streams_;
    std::atomic<std::size_t> calls_{0};
};

/// Hash-expanded embeddings in [-1, 1]^dim, one deterministic vector per
/// distinct text.
class MockEmbedder : public EmbedderBackend {
public:
    MockEmbedder(std::size_t dim, std::uint64_t seed);

    EmbeddingVector embed(const std::string& text) override;

    std::size_t call_count() const { return calls_.load(); }

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
};

/// Fluency evaluator stand-in: whitespace tokens with deterministic
/// logprobs in [-3.2, -0.2]. Individual texts can be pinned to an exact
/// uniform per-token logprob, which makes their perplexity exp(-logprob)
/// and lets tests exercise thresholds precisely.
class MockPerplexityEvaluator : public ScorerBackend {
public:
    explicit MockPerplexityEvaluator(std::uint64_t seed);

    void set_uniform_logprob(const std::string& text, double logprob);

    TokenLogprobs score_continuation(const std::string& context,
                                     const std::string& continuation,
                                     const std::string& image_ref) override;

    std::size_t score_calls() const { return calls_.load(); }

private:
    std::uint64_t seed_;
    std::unordered_map<std::string, double> pinned_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace editflip
