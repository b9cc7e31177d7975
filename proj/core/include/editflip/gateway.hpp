#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "editflip/edits.hpp"

namespace editflip {

/// Token-level log-probabilities for a scored text. The first `context_len`
/// tokens belong to the prompt/context; the remainder is the continuation
/// being scored. `raw_logits` marks backends (the deterministic mock, mainly)
/// that return unnormalized scores, which may be positive.
struct TokenLogprobs {
    std::vector<std::string> tokens;
    std::vector<double> logprobs;
    std::size_t context_len = 0;
    bool raw_logits = false;

    std::size_t continuation_tokens() const { return logprobs.size() - context_len; }

    /// Sum over continuation tokens only; the context prefix is masked out.
    double continuation_sum() const {
        return std::accumulate(logprobs.begin() + static_cast<std::ptrdiff_t>(context_len),
                               logprobs.end(), 0.0);
    }

    double total_sum() const { return std::accumulate(logprobs.begin(), logprobs.end(), 0.0); }
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

struct EditProposalRequest {
    std::string current_question;
    const EditHistory* history = nullptr;  // optional; nullptr means empty
    int num_edits = 3;
    std::string instance_id;  // diagnostics only, never sent to the model
};

/// Text-generation backend that proposes candidate edits. Implementations
/// return the raw model text; parsing and validation happen in
/// propose_edits so every backend is held to the same contract.
class EditGeneratorBackend {
public:
    virtual ~EditGeneratorBackend() = default;
    virtual std::string generate(const EditProposalRequest& request) = 0;
};

/// Target-model scoring backend: log-probability of `continuation` after
/// `context` (optionally conditioned on an image). Throws BackendError on
/// transport failure and ProtocolError on malformed responses.
class ScorerBackend {
public:
    virtual ~ScorerBackend() = default;
    virtual TokenLogprobs score_continuation(const std::string& context,
                                             const std::string& continuation,
                                             const std::string& image_ref) = 0;
};

class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
};

/// Outcome of one proposal round, including what was discarded and why, so
/// search traces can account for every candidate the generator produced.
struct ProposalBatch {
    std::vector<EditPair> edits;  // valid, deduplicated, at most num_edits
    std::string raw_text;
    std::size_t parsed = 0;      // pairs extracted from raw_text
    std::size_t invalid = 0;     // dropped: empty prev, or prev == next
    std::size_t duplicates = 0;  // dropped: already in the attack history
};

/// Extracts "(previous , new)" pairs from model output. Tolerates numbering
/// and bullet prefixes, "->" or comma separators, and optional single or
/// double quotes around either side; outer whitespace is trimmed. Returns
/// the pairs in order of appearance, including invalid or duplicate ones;
/// filtering is propose_edits' job. Throws ProposalParseError (raw text
/// attached) when not a single pair can be extracted.
std::vector<EditPair> parse_edit_pairs(std::string_view raw_text);

/// Calls the generator once and post-processes its output: parse, drop
/// invalid pairs, drop pairs already in `history` (or duplicated within the
/// batch), truncate to request.num_edits. An empty `edits` list with
/// parsed > 0 means every extracted pair was invalid or a duplicate; the
/// caller decides whether that exhausts its budget. ProposalParseError from
/// unparseable responses and backend exceptions pass through untouched.
ProposalBatch propose_edits(EditGeneratorBackend& backend, const EditProposalRequest& request);

/// Validating wrapper around ScorerBackend::score_continuation. Enforces:
/// non-empty continuation, tokens/logprobs length match, context_len within
/// range, at least one continuation token, and non-positive logprobs unless
/// the backend marked them as raw logits. Throws ProtocolError on violation.
TokenLogprobs score_continuation(ScorerBackend& backend, const std::string& context,
                                 const std::string& continuation, const std::string& image_ref);

/// Caching front-end for an embedder: each distinct text is embedded once,
/// and all embeddings must share one dimensionality (ProtocolError if a
/// response disagrees, or if a vector is empty). Safe for concurrent use;
/// returned references stay valid for the gateway's lifetime (entries are
/// never evicted).
class EmbedderGateway {
public:
    explicit EmbedderGateway(std::shared_ptr<EmbedderBackend> backend);

    const EmbeddingVector& embed(const std::string& text);

    std::size_t cache_size() const;
    std::size_t backend_calls() const;

private:
    std::shared_ptr<EmbedderBackend> backend_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
    std::size_t backend_calls_ = 0;
    std::size_t dimension_ = 0;  // 0 until the first embedding arrives
};

/// Instruction template sent to the edit generator. Versioned so runs record
/// exactly which prompt produced their edits.
std::string_view edit_prompt_template_version();
std::string_view edit_prompt_template();
std::uint64_t edit_prompt_template_hash();

/// Fills the template with the request's question, history, and edit count.
std::string render_edit_prompt(const EditProposalRequest& request);

}  // namespace editflip
