#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "editflip/dataset.hpp"
#include "editflip/http_backend.hpp"
#include "editflip/mcts.hpp"
#include "editflip/mocks.hpp"
#include "editflip/quality.hpp"
#include "editflip/results.hpp"

namespace editflip {

struct GeneratorSpec {
    enum class Kind { http, scripted, random };
    Kind kind = Kind::random;
    HttpBackendSpec http;
    std::map<std::string, std::vector<EditPair>> scripts;  // question -> edits
};

struct ScorerSpec {
    enum class Kind { http, mock, default_world };
    Kind kind = Kind::default_world;
    HttpBackendSpec http;
    std::optional<MockScorerConfig> default_config;            // kind == mock
    std::map<std::string, MockScorerConfig> instance_configs;  // image_ref -> config
};

struct EvaluatorSpec {
    enum class Kind { http, mock };
    Kind kind = Kind::mock;
    HttpBackendSpec http;
    std::map<std::string, double> pinned;  // text -> uniform per-token logprob
};

struct EmbedderSpec {
    enum class Kind { http, mock };
    Kind kind = Kind::mock;
    HttpBackendSpec http;
    std::size_t dim = 16;
};

struct RunConfig {
    std::string dataset_path;
    DatasetFormat dataset_format = DatasetFormat::native_jsonl;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int parallelism = 1;
    bool resume = false;
    bool trace = false;
    bool depth1 = false;
    bool include_timings = false;  // keep off for byte-reproducible outputs
    double ppl_threshold = kDefaultPplThreshold;
    double non_latin_flag_ratio = kDefaultNonLatinRatio;
    double rate_limit_rps = 0.0;  // <= 0 disables the shared limiter
    SearchParams search;
    GeneratorSpec generator;
    ScorerSpec scorer;
    EvaluatorSpec evaluator;
    EmbedderSpec embedder;

    std::string source_text;  // raw config file text, secrets uninterpolated

    void validate() const;
};

/// Reads a JSON run config. String values may reference environment
/// variables as ${NAME}; unset variables are a ConfigError. The raw file
/// text (with ${NAME} intact) is kept for the manifest snapshot.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text, const std::string& source_name);

/// Switches every backend spec to its deterministic in-process mock
/// (scripted generators configured in the file are kept).
void force_mock_backends(RunConfig& config);

/// Live backends for one run, built from the config.
struct BackendSet {
    std::shared_ptr<EditGeneratorBackend> generator;
    std::shared_ptr<ScorerBackend> scorer;
    std::shared_ptr<ScorerBackend> evaluator;
    std::shared_ptr<EmbedderBackend> embedder;
    std::shared_ptr<RateLimiter> limiter;
    bool default_world = false;
};

/// Instantiates backends. For the default-world scorer, per-instance
/// synthetic configs are registered under default_world_ref(id).
BackendSet build_backends(const RunConfig& config, const std::vector<McqInstance>& instances);

/// In default-world mock mode every instance is scored under its synthetic
/// image ref; otherwise instances pass through unchanged.
std::vector<McqInstance> effective_instances(const BackendSet& backends,
                                             std::vector<McqInstance> instances);

struct PrescreenResult {
    std::vector<McqInstance> attackable;
    std::vector<McqInstance> misclassified;
    std::vector<std::pair<std::string, std::string>> errored;  // id -> cause
    std::map<std::string, ScoreReport> root_reports;           // id -> report
};

/// Scores every instance's original question and partitions by whether the
/// model currently answers it correctly. Scorer failures put the instance
/// in `errored` without aborting the screen.
PrescreenResult prescreen(const std::vector<McqInstance>& instances, ScorerBackend& scorer);

struct InstanceStatus {
    std::string id;
    std::string outcome;
    bool reused = false;  // carried over from a previous run via resume
};

struct RunManifest {
    int schema_version = 1;
    std::string started_at;
    std::string finished_at;
    std::uint64_t seed = 0;
    std::string dataset_path;
    std::string prompt_template_version;
    std::string prompt_template_hash;  // hex
    std::string config_snapshot;       // raw config text
    bool depth1 = false;
    double ppl_threshold = 0.0;
    std::size_t total = 0;
    std::size_t attacked = 0;
    std::size_t successes = 0;
    std::size_t skipped = 0;
    std::size_t errored = 0;
    std::size_t reused = 0;
    std::vector<InstanceStatus> statuses;  // every dataset id exactly once
};

/// Serialized manifest, written via temp file + atomic rename.
void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest load_manifest(const std::string& path);

struct BatchResult {
    RunManifest manifest;
    std::vector<ResultRow> rows;  // dataset order
    std::string results_path;
    std::string manifest_path;
};

/// The full batch pipeline: load dataset, build backends, attack every
/// instance (at most `parallelism` concurrently), assess quality of
/// successes, and persist results.jsonl + manifest.json (+ traces/). With
/// resume=true, rows already present in results.jsonl are reused and their
/// instances are not re-attacked. results.jsonl lines always follow dataset
/// order, so equal (config, seed) runs produce identical bytes in mock mode.
BatchResult run_batch(const RunConfig& config);

}  // namespace editflip
