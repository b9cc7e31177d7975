#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "editflip/edits.hpp"
#include "editflip/gateway.hpp"
#include "editflip/mcts.hpp"

namespace editflip {

inline constexpr double kDefaultPplThreshold = 15.0;
inline constexpr double kDefaultNonLatinRatio = 0.5;

/// Post-hoc quality assessment of one successful attack.
struct QualityReport {
    double ppl = 0.0;              // perplexity of the final question
    double similarity = 0.0;       // cosine(original, final) embeddings
    double non_latin_ratio = 0.0;  // over letters of the final question
    bool language_confusion = false;  // any path edit tripped the flag
    bool retained_after_ppl = false;  // ppl < threshold at filter time
};

/// exp(-mean token logprob) of `text` scored with an empty context. Lower
/// is more fluent. Throws on empty text; evaluator errors propagate.
double perplexity(ScorerBackend& evaluator, const std::string& text);

/// Same, from already-obtained logprobs (all tokens contribute).
double perplexity_from_logprobs(const std::vector<double>& logprobs);

/// Cosine of two raw vectors. Throws UndefinedSimilarityError when either
/// has zero norm, and Error on dimension mismatch or empty input.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Cosine similarity of the two texts' embeddings (cached via the gateway).
double semantic_similarity(EmbedderGateway& embedder, const std::string& base,
                           const std::string& edited);

/// Fraction of letters (Unicode letters only; digits, punctuation, and
/// whitespace excluded) that belong to a non-Latin script. Text with no
/// letters at all has ratio 0.
double non_latin_letter_ratio(std::string_view text);

/// True iff the non-Latin letter fraction of edit.next exceeds the ratio
/// threshold. Flagged edits stay usable; the flag is only counted.
bool language_confusion_flag(const EditPair& edit,
                             double ratio_threshold = kDefaultNonLatinRatio);

/// One line of results.jsonl: the attack outcome plus, for successes, the
/// quality assessment.
struct ResultRow {
    AttackRecord record;
    std::optional<QualityReport> quality;
};

/// Builds the QualityReport for one successful record.
QualityReport assess_quality(ScorerBackend& evaluator, EmbedderGateway& embedder,
                             const AttackRecord& record, double ppl_threshold,
                             double non_latin_ratio_threshold = kDefaultNonLatinRatio);

/// Re-evaluates retained_after_ppl on every successful row: retained iff
/// ppl < threshold (strict). Failed, skipped, and errored rows pass through
/// untouched. Idempotent; only successes are ever demoted. Throws
/// ReportingError if a success is missing its QualityReport.
void apply_ppl_filter(std::vector<ResultRow>& rows, double ppl_threshold);

}  // namespace editflip
