#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "editflip/errors.hpp"
#include "editflip/mocks.hpp"
#include "editflip/scoring.hpp"
#include "test_support.hpp"

using namespace editflip;
using editflip::testing::make_instance;

TEST_CASE("make_score_report picks the argmax and signs the margin") {
    ScoreReport report = make_score_report({1.0, 1.3}, 0, "q");
    CHECK(report.predicted_index == 1);
    CHECK(report.truth_index == 0);
    CHECK(report.margin == doctest::Approx(-0.3));
    CHECK(is_attack_success(report));
}

TEST_CASE("make_score_report keeps a correct prediction with positive margin") {
    ScoreReport report = make_score_report({2.0, 0.5, 1.0}, 0, "q");
    CHECK(report.predicted_index == 0);
    CHECK(report.margin == doctest::Approx(1.0));
    CHECK_FALSE(is_attack_success(report));
}

TEST_CASE("exact ties resolve to the lowest index") {
    SUBCASE("tie involving the truth option") {
        ScoreReport report = make_score_report({0.7, 0.7}, 0, "q");
        CHECK(report.predicted_index == 0);
        CHECK(report.margin == doctest::Approx(0.0));
        CHECK_FALSE(is_attack_success(report));
    }
    SUBCASE("tie when truth is the higher index") {
        ScoreReport report = make_score_report({0.7, 0.7}, 1, "q");
        CHECK(report.predicted_index == 0);
        CHECK(report.margin == doctest::Approx(0.0));
        CHECK(is_attack_success(report));
    }
    SUBCASE("tie among competitors only") {
        ScoreReport report = make_score_report({0.9, 0.4, 0.4}, 0, "q");
        CHECK(report.predicted_index == 0);
        CHECK(report.margin == doctest::Approx(0.5));
    }
}

TEST_CASE("make_score_report validates its inputs") {
    CHECK_THROWS_AS(make_score_report({}, 0, "q"), Error);
    CHECK_THROWS_AS(make_score_report({1.0, 2.0}, 2, "q"), Error);
    CHECK_THROWS_AS(make_score_report({1.0, 2.0}, -1, "q"), Error);
}

TEST_CASE("margin equals truth score minus best competitor on random inputs") {
    std::mt19937_64 rng(777);
    std::uniform_real_distribution<double> score(-4.0, 4.0);
    for (int round = 0; round < 2000; ++round) {
        std::uniform_int_distribution<int> size(2, 6);
        const int n = size(rng);
        std::vector<double> scores(static_cast<std::size_t>(n));
        for (double& s : scores) {
            s = score(rng);
        }
        const int truth = std::uniform_int_distribution<int>(0, n - 1)(rng);
        ScoreReport report = make_score_report(scores, truth, "q");

        int argmax = 0;
        for (int i = 1; i < n; ++i) {
            if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(argmax)]) {
                argmax = i;
            }
        }
        double best_other = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (i != truth) {
                best_other = std::max(best_other, scores[static_cast<std::size_t>(i)]);
            }
        }
        CHECK(report.predicted_index == argmax);
        CHECK(report.margin ==
              doctest::Approx(scores[static_cast<std::size_t>(truth)] - best_other)
                  .epsilon(1e-12));
        CHECK(is_attack_success(report) == (argmax != truth));
    }
}

TEST_CASE("reward is sign times margin") {
    ScoreReport report = make_score_report({1.0, 0.4}, 0, "q");
    CHECK(reward(report, -1) == doctest::Approx(-0.6));
    CHECK(reward(report, 1) == doctest::Approx(0.6));
}

TEST_CASE("score_options sums continuation logprobs per option") {
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {0.9, 0.2};
    config.rules = {{"lesion", 1, 1.5}};
    MockScorer scorer;
    scorer.set_default_config(config);

    McqInstance instance = make_instance("i1", "Is it normal?");

    SUBCASE("without the rule keyword the base scores decide") {
        ScoreReport report = score_options(scorer, instance, "Is it normal?");
        REQUIRE(report.option_scores.size() == 2);
        CHECK(report.option_scores[0] == doctest::Approx(0.9));
        CHECK(report.option_scores[1] == doctest::Approx(0.2));
        CHECK(report.predicted_index == 0);
        CHECK(report.margin == doctest::Approx(0.7));
        CHECK(report.question_text == "Is it normal?");
    }
    SUBCASE("an edited question can trigger the rule and flip the score") {
        ScoreReport report = score_options(scorer, instance, "Is the lesion normal?");
        CHECK(report.option_scores[1] == doctest::Approx(1.7));
        CHECK(report.predicted_index == 1);
        CHECK(report.margin == doctest::Approx(-0.8));
    }
}

TEST_CASE("score_options agrees with the mock logit oracle on random worlds") {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> base(-2.0, 2.0);
    const std::vector<std::string> words = {"red", "small", "dense", "round", "left"};
    for (int round = 0; round < 200; ++round) {
        MockScorerConfig config;
        const int option_count = std::uniform_int_distribution<int>(2, 4)(rng);
        for (int i = 0; i < option_count; ++i) {
            config.options.push_back("opt" + std::to_string(i));
            config.base_scores.push_back(base(rng));
        }
        const int rule_count = std::uniform_int_distribution<int>(0, 3)(rng);
        for (int r = 0; r < rule_count; ++r) {
            MockScoreRule rule;
            rule.keyword = words[std::uniform_int_distribution<std::size_t>(0, 4)(rng)];
            rule.option_index = std::uniform_int_distribution<int>(0, option_count - 1)(rng);
            rule.delta = base(rng);
            config.rules.push_back(rule);
        }
        MockScorer scorer;
        scorer.set_default_config(config);

        std::string question = "Is the";
        const int word_count = std::uniform_int_distribution<int>(1, 4)(rng);
        for (int w = 0; w < word_count; ++w) {
            question += " " + words[std::uniform_int_distribution<std::size_t>(0, 4)(rng)];
        }
        question += " area?";

        McqInstance instance;
        instance.id = "r" + std::to_string(round);
        instance.question = question;
        instance.options = config.options;
        instance.truth_index = 0;
        ScoreReport report = score_options(scorer, instance, question);
        REQUIRE(report.option_scores.size() == static_cast<std::size_t>(option_count));
        for (int i = 0; i < option_count; ++i) {
            CHECK(report.option_scores[static_cast<std::size_t>(i)] ==
                  doctest::Approx(mock_logit(config, question, static_cast<std::size_t>(i)))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("rule keywords match case-sensitively as substrings") {
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {0.0, 0.0};
    config.rules = {{"Lesion", 0, 1.0}, {"esio", 1, 0.5}};
    CHECK(mock_logit(config, "the lesion", 0) == doctest::Approx(0.0));
    CHECK(mock_logit(config, "the lesion", 1) == doctest::Approx(0.5));
    CHECK(mock_logit(config, "the Lesion", 0) == doctest::Approx(1.0));
}

TEST_CASE("repeated keyword occurrences count once per rule") {
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {0.0, 0.0};
    config.rules = {{"a", 0, 0.3}, {"a", 0, 0.3}};
    CHECK(mock_logit(config, "banana", 0) == doctest::Approx(0.6));
}

TEST_CASE("score_options reports the failing option on backend errors") {
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {0.1, 0.2};
    MockScorer scorer;
    scorer.set_default_config(config);
    McqInstance instance = make_instance("i1", "q");
    instance.options = {"yes", "unknown-option"};
    try {
        score_options(scorer, instance, "q");
        FAIL("expected a scoring error");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("option 1") != std::string::npos);
    }
}

TEST_CASE("mock scorer routes by image ref and falls back to the default") {
    MockScorerConfig low;
    low.options = {"yes", "no"};
    low.base_scores = {0.1, 0.0};
    MockScorerConfig high;
    high.options = {"yes", "no"};
    high.base_scores = {5.0, 0.0};
    MockScorer scorer;
    scorer.set_default_config(low);
    scorer.add_config("mock://special", high);

    McqInstance plain = make_instance("p", "q");
    McqInstance special = make_instance("s", "q");
    special.image_ref = "mock://special";

    CHECK(score_options(scorer, plain, "q").option_scores[0] == doctest::Approx(0.1));
    CHECK(score_options(scorer, special, "q").option_scores[0] == doctest::Approx(5.0));
    CHECK(scorer.score_calls() == 4);
}

TEST_CASE("mock scorer without any matching config reports a backend error") {
    MockScorer scorer;
    McqInstance instance = make_instance("i", "q");
    CHECK_THROWS_AS(score_options(scorer, instance, "q"), Error);
}

TEST_CASE("mock config validation rejects malformed worlds") {
    MockScorerConfig config;
    CHECK_THROWS_AS(validate_mock_config(config), ConfigError);
    config.options = {"yes", "no"};
    config.base_scores = {0.1};
    CHECK_THROWS_AS(validate_mock_config(config), ConfigError);
    config.base_scores = {0.1, 0.2};
    CHECK_NOTHROW(validate_mock_config(config));
    config.rules = {{"", 0, 1.0}};
    CHECK_THROWS_AS(validate_mock_config(config), ConfigError);
    config.rules = {{"k", 2, 1.0}};
    CHECK_THROWS_AS(validate_mock_config(config), ConfigError);
}

TEST_CASE("the default world is deterministic in seed and id") {
    McqInstance instance = make_instance("case-7", "Is the lesion benign or malignant?");
    MockScorerConfig a = default_world_config(instance, 42);
    MockScorerConfig b = default_world_config(instance, 42);
    CHECK(a.options == b.options);
    CHECK(a.base_scores == b.base_scores);
    REQUIRE(a.rules.size() == b.rules.size());
    for (std::size_t i = 0; i < a.rules.size(); ++i) {
        CHECK(a.rules[i].keyword == b.rules[i].keyword);
        CHECK(a.rules[i].option_index == b.rules[i].option_index);
        CHECK(a.rules[i].delta == doctest::Approx(b.rules[i].delta));
    }
    MockScorerConfig other_seed = default_world_config(instance, 43);
    MockScorerConfig other_id =
        default_world_config(make_instance("case-8", instance.question), 42);
    CHECK((other_seed.base_scores != a.base_scores || other_id.base_scores != a.base_scores));
    CHECK(default_world_ref("case-7") == "mock://case-7");
}

TEST_CASE("anchored default worlds key the bonus rule on the longest word") {
    McqInstance instance = make_instance("anchor-check", "Is the abnormality visible?");
    bool saw_anchored = false;
    for (std::uint64_t seed = 0; seed < 64 && !saw_anchored; ++seed) {
        MockScorerConfig config = default_world_config(instance, seed);
        if (config.rules.empty()) {
            continue;
        }
        saw_anchored = true;
        REQUIRE(config.rules.size() == 1);
        CHECK(config.rules[0].keyword == "abnormality");
        CHECK(config.rules[0].option_index == instance.truth_index);
        CHECK(config.rules[0].delta == doctest::Approx(0.8));
        CHECK(config.base_scores[0] == doctest::Approx(0.4));
    }
    CHECK(saw_anchored);
}

TEST_CASE("roughly a third of default-world instances start out misclassified") {
    int misclassified = 0;
    const int total = 400;
    for (int i = 0; i < total; ++i) {
        McqInstance instance =
            make_instance("bulk-" + std::to_string(i), "Is the region abnormal?");
        MockScorerConfig config = default_world_config(instance, 99);
        std::vector<double> scores;
        for (std::size_t opt = 0; opt < config.options.size(); ++opt) {
            scores.push_back(mock_logit(config, instance.question, opt));
        }
        ScoreReport report =
            make_score_report(scores, instance.truth_index, instance.question);
        if (is_attack_success(report)) {
            ++misclassified;
        }
    }
    CHECK(misclassified > total / 5);
    CHECK(misclassified < total / 2);
}
