#pragma once

#include <string>
#include <vector>

#include "editflip/gateway.hpp"
#include "editflip/mcq.hpp"

namespace editflip {

/// Per-option log-likelihood scores for one (question, options) pair, plus
/// the resulting prediction. `margin` is score[truth] minus the best
/// competing score: positive while the model still answers correctly, zero
/// at an exact tie, negative once the prediction has flipped.
struct ScoreReport {
    std::vector<double> option_scores;
    int predicted_index = -1;
    int truth_index = -1;
    double margin = 0.0;
    std::string question_text;
};

/// Builds a report from precomputed option scores. Prediction is the argmax;
/// ties resolve to the lowest index. Throws Error when scores are empty or
/// truth_index is out of range.
ScoreReport make_score_report(std::vector<double> option_scores, int truth_index,
                              std::string question_text);

/// Scores every option of `instance` as a continuation of `question_text`
/// (the possibly edited question). Each option's score is the sum of its
/// continuation-token logprobs, context tokens masked out. Backend errors
/// are rethrown with the failing option index prepended.
ScoreReport score_options(ScorerBackend& backend, const McqInstance& instance,
                          const std::string& question_text);

/// Attack success: the model no longer predicts the ground-truth option.
bool is_attack_success(const ScoreReport& report);

/// Search reward for a scored node: sign * margin. The default sign of -1
/// makes reward grow as the truth margin shrinks, steering the search
/// toward flips.
double reward(const ScoreReport& report, int reward_sign);

}  // namespace editflip
