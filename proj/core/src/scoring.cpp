#include "editflip/scoring.hpp"

#include <sstream>

#include "editflip/errors.hpp"

namespace editflip {

ScoreReport make_score_report(std::vector<double> option_scores, int truth_index,
                              std::string question_text) {
    if (option_scores.empty()) {
        throw Error("cannot build a score report with no option scores");
    }
    if (truth_index < 0 || truth_index >= static_cast<int>(option_scores.size())) {
        std::ostringstream msg;
        msg << "truth_index " << truth_index << " is out of range for "
            << option_scores.size() << " option scores";
        throw Error(msg.str());
    }
    ScoreReport report;
    report.truth_index = truth_index;
    report.question_text = std::move(question_text);

    int best = 0;
    for (int i = 1; i < static_cast<int>(option_scores.size()); ++i) {
        if (option_scores[i] > option_scores[best]) {
            best = i;
        }
    }
    report.predicted_index = best;

    double best_competing = 0.0;
    bool have_competing = false;
    for (int i = 0; i < static_cast<int>(option_scores.size()); ++i) {
        if (i == truth_index) {
            continue;
        }
        if (!have_competing || option_scores[i] > best_competing) {
            best_competing = option_scores[i];
            have_competing = true;
        }
    }
    // A single-option report cannot occur for a valid instance (>= 2
    // options), but make_score_report is also used directly in tests.
    report.margin = have_competing ? option_scores[truth_index] - best_competing : 0.0;
    report.option_scores = std::move(option_scores);
    return report;
}

ScoreReport score_options(ScorerBackend& backend, const McqInstance& instance,
                          const std::string& question_text) {
    std::vector<double> scores;
    scores.reserve(instance.options.size());
    for (std::size_t i = 0; i < instance.options.size(); ++i) {
        auto describe = [&](const char* what) {
            std::ostringstream msg;
            msg << "scoring option " << i << " of instance \"" << instance.id << "\": " << what;
            return msg.str();
        };
        try {
            TokenLogprobs lp =
                score_continuation(backend, question_text, instance.options[i], instance.image_ref);
            scores.push_back(lp.continuation_sum());
        } catch (const ProtocolError& e) {
            throw ProtocolError(describe(e.what()));
        } catch (const Error& e) {
            throw BackendError(describe(e.what()));
        }
    }
    return make_score_report(std::move(scores), instance.truth_index, question_text);
}

bool is_attack_success(const ScoreReport& report) {
    return report.predicted_index != report.truth_index;
}

double reward(const ScoreReport& report, int reward_sign) {
    return static_cast<double>(reward_sign) * report.margin;
}

}  // namespace editflip
