#include "editflip/quality.hpp"

#include <cmath>
#include <sstream>

#include "editflip/errors.hpp"
#include "editflip/util.hpp"

namespace editflip {

double perplexity_from_logprobs(const std::vector<double>& logprobs) {
    if (logprobs.empty()) {
        throw ProtocolError("perplexity needs at least one token logprob");
    }
    double total = 0.0;
    for (double lp : logprobs) {
        total += lp;
    }
    const double mean = total / static_cast<double>(logprobs.size());
    return std::exp(-mean);
}

double perplexity(ScorerBackend& evaluator, const std::string& text) {
    if (text.empty()) {
        throw Error("cannot compute perplexity of empty text");
    }
    TokenLogprobs lp = score_continuation(evaluator, "", text, "");
    // Only continuation tokens count; an evaluator that reports context
    // tokens anyway gets them masked out here.
    std::vector<double> continuation(lp.logprobs.begin() + static_cast<std::ptrdiff_t>(lp.context_len),
                                     lp.logprobs.end());
    return perplexity_from_logprobs(continuation);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) {
        throw Error("cosine similarity of an empty vector is undefined");
    }
    if (a.size() != b.size()) {
        std::ostringstream msg;
        msg << "cosine similarity dimension mismatch: " << a.size() << " vs " << b.size();
        throw Error(msg.str());
    }
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        norm_a += a[i] * a[i];
        norm_b += b[i] * b[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        throw UndefinedSimilarityError("cosine similarity undefined for a zero-norm vector");
    }
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

double semantic_similarity(EmbedderGateway& embedder, const std::string& base,
                           const std::string& edited) {
    if (base.empty() || edited.empty()) {
        throw Error("semantic similarity needs two non-empty texts");
    }
    const EmbeddingVector& a = embedder.embed(base);
    const EmbeddingVector& b = embedder.embed(edited);
    return cosine_similarity(a.values, b.values);
}

double non_latin_letter_ratio(std::string_view text) {
    std::size_t letters = 0;
    std::size_t non_latin = 0;
    for (char32_t cp : utf8_codepoints(text)) {
        if (is_latin_letter(cp)) {
            ++letters;
        } else if (is_nonlatin_letter(cp)) {
            ++letters;
            ++non_latin;
        }
    }
    if (letters == 0) {
        return 0.0;
    }
    return static_cast<double>(non_latin) / static_cast<double>(letters);
}

bool language_confusion_flag(const EditPair& edit, double ratio_threshold) {
    return non_latin_letter_ratio(edit.next) > ratio_threshold;
}

QualityReport assess_quality(ScorerBackend& evaluator, EmbedderGateway& embedder,
                             const AttackRecord& record, double ppl_threshold,
                             double non_latin_ratio_threshold) {
    QualityReport quality;
    quality.ppl = perplexity(evaluator, record.final_question);
    quality.similarity =
        semantic_similarity(embedder, record.original_question, record.final_question);
    quality.non_latin_ratio = non_latin_letter_ratio(record.final_question);
    for (const EditPair& edit : record.edit_path) {
        if (language_confusion_flag(edit, non_latin_ratio_threshold)) {
            quality.language_confusion = true;
            break;
        }
    }
    quality.retained_after_ppl = quality.ppl < ppl_threshold;
    return quality;
}

void apply_ppl_filter(std::vector<ResultRow>& rows, double ppl_threshold) {
    for (ResultRow& row : rows) {
        if (!row.record.success || row.record.errored) {
            continue;
        }
        if (!row.quality) {
            throw ReportingError("successful instance \"" + row.record.instance_id +
                                 "\" has no quality report to filter on");
        }
        row.quality->retained_after_ppl = row.quality->ppl < ppl_threshold;
    }
}

}  // namespace editflip
