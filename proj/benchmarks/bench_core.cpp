#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "editflip/edits.hpp"
#include "editflip/gateway.hpp"
#include "editflip/mcq.hpp"
#include "editflip/mcts.hpp"
#include "editflip/mocks.hpp"
#include "editflip/quality.hpp"
#include "editflip/scoring.hpp"

namespace {

using namespace editflip;

void BM_Uct(benchmark::State& state) {
    std::size_t parent = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(uct(parent, (parent % 37) + 1, -0.75, 1.4));
        parent += 1;
    }
}
BENCHMARK(BM_Uct);

void BM_ApplyEdit(benchmark::State& state) {
    const std::string question =
        "Does the ultrasound image show a malignant lesion near the distal margin of the "
        "hepatic segment?";
    const EditPair edit{"malignant lesion", "focal nodule"};
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_edit(question, edit));
    }
}
BENCHMARK(BM_ApplyEdit);

void BM_ParseEditPairs(benchmark::State& state) {
    const std::string reply =
        "1. (\"malignant lesion\" , \"focal nodule\")\n"
        "2. (\"near the\" -> \"close to\")\n"
        "3. ('distal margin' , 'outer edge')\n";
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_edit_pairs(reply));
    }
}
BENCHMARK(BM_ParseEditPairs);

void BM_ScoreOptions(benchmark::State& state) {
    MockScorerConfig config;
    config.options = {"yes", "no", "unclear"};
    config.base_scores = {0.8, 0.2, 0.1};
    config.rules = {{"lesion", 0, 0.4}, {"shadow", 1, 0.3}};
    MockScorer scorer;
    scorer.set_default_config(config);
    McqInstance instance;
    instance.id = "bench";
    instance.image_ref = "bench.png";
    instance.question = "Does the image show a lesion with posterior shadow?";
    instance.options = {"yes", "no", "unclear"};
    instance.truth_index = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(score_options(scorer, instance, instance.question));
    }
}
BENCHMARK(BM_ScoreOptions);

/// Full search on a scripted two-edit world, flip at depth 2. The tree shape
/// is identical every iteration, so this tracks the per-attack overhead of
/// selection, expansion, and backpropagation.
void BM_ScriptedAttack(benchmark::State& state) {
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {0.0, 0.1};
    config.rules = {{"alpha", 0, 0.6}, {"beta", 0, 0.6}};
    MockScorer scorer;
    scorer.set_default_config(config);

    ScriptedEditGenerator generator;
    generator.script("alpha beta question", {{"alpha ", ""}, {"beta ", ""}});
    generator.script("beta question", {{"beta q", "q"}});
    generator.script("alpha question", {{"alpha q", "q"}});

    McqInstance instance;
    instance.id = "bench";
    instance.image_ref = "bench.png";
    instance.question = "alpha beta question";
    instance.options = {"yes", "no"};
    instance.truth_index = 0;

    SearchParams params;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_attack(instance, generator, scorer, params));
    }
}
BENCHMARK(BM_ScriptedAttack);

void BM_PerplexityFromLogprobs(benchmark::State& state) {
    std::vector<double> logprobs(64);
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        logprobs[i] = -0.2 - 0.05 * static_cast<double>(i % 40);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(perplexity_from_logprobs(logprobs));
    }
}
BENCHMARK(BM_PerplexityFromLogprobs);

}  // namespace

BENCHMARK_MAIN();
