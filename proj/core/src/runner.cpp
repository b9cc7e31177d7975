#include "editflip/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <utility>

#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"
#include "editflip/scoring.hpp"
#include "editflip/util.hpp"

namespace editflip {
namespace {

using nlohmann::json;

std::string interpolate_env(const std::string& value, const std::string& where) {
    std::string out;
    std::size_t pos = 0;
    while (pos < value.size()) {
        std::size_t open = value.find("${", pos);
        if (open == std::string::npos) {
            out.append(value, pos, std::string::npos);
            break;
        }
        out.append(value, pos, open - pos);
        std::size_t close = value.find('}', open + 2);
        if (close == std::string::npos) {
            throw ConfigError("unterminated ${ reference in " + where);
        }
        std::string name = value.substr(open + 2, close - open - 2);
        if (name.empty()) {
            throw ConfigError("empty ${} reference in " + where);
        }
        const char* resolved = std::getenv(name.c_str());
        if (resolved == nullptr) {
            throw ConfigError("environment variable " + name + " referenced by " + where +
                              " is not set");
        }
        out += resolved;
        pos = close + 1;
    }
    return out;
}

void interpolate_tree(json& node, const std::string& where) {
    if (node.is_string()) {
        node = interpolate_env(node.get<std::string>(), where);
    } else if (node.is_object()) {
        for (auto& [key, value] : node.items()) {
            interpolate_tree(value, where + "." + key);
        }
    } else if (node.is_array()) {
        std::size_t i = 0;
        for (auto& value : node) {
            interpolate_tree(value, where + "[" + std::to_string(i++) + "]");
        }
    }
}

const json* find_member(const json& obj, const char* key) {
    if (!obj.is_object()) {
        return nullptr;
    }
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

[[noreturn]] void bad_field(const std::string& where, const std::string& key,
                            const std::string& expected) {
    throw ConfigError("config field " + where + "." + key + " must be " + expected);
}

std::string get_string(const json& obj, const std::string& where, const std::string& key,
                       std::string fallback) {
    const json* f = find_member(obj, key.c_str());
    if (f == nullptr) {
        return fallback;
    }
    if (!f->is_string()) {
        bad_field(where, key, "a string");
    }
    return f->get<std::string>();
}

std::string require_string(const json& obj, const std::string& where, const std::string& key) {
    const json* f = find_member(obj, key.c_str());
    if (f == nullptr || !f->is_string() || f->get<std::string>().empty()) {
        bad_field(where, key, "a non-empty string");
    }
    return f->get<std::string>();
}

double get_double(const json& obj, const std::string& where, const std::string& key,
                  double fallback) {
    const json* f = find_member(obj, key.c_str());
    if (f == nullptr) {
        return fallback;
    }
    if (!f->is_number()) {
        bad_field(where, key, "a number");
    }
    return f->get<double>();
}

int get_int(const json& obj, const std::string& where, const std::string& key, int fallback) {
    const json* f = find_member(obj, key.c_str());
    if (f == nullptr) {
        return fallback;
    }
    if (!f->is_number_integer()) {
        bad_field(where, key, "an integer");
    }
    return f->get<int>();
}

bool get_bool(const json& obj, const std::string& where, const std::string& key, bool fallback) {
    const json* f = find_member(obj, key.c_str());
    if (f == nullptr) {
        return fallback;
    }
    if (!f->is_boolean()) {
        bad_field(where, key, "a boolean");
    }
    return f->get<bool>();
}

std::uint64_t get_seed(const json& obj, const std::string& where, const std::string& key,
                       std::uint64_t fallback) {
    const json* f = find_member(obj, key.c_str());
    if (f == nullptr) {
        return fallback;
    }
    if (!f->is_number_integer()) {
        bad_field(where, key, "an integer");
    }
    return f->get<std::uint64_t>();
}

HttpBackendSpec parse_http_spec(const json& obj, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError("config field " + where + " must be an object");
    }
    HttpBackendSpec spec;
    spec.base_url = require_string(obj, where, "base_url");
    spec.auth_env = get_string(obj, where, "auth_env", "");
    spec.model = get_string(obj, where, "model", "");
    spec.score_path = get_string(obj, where, "score_path", spec.score_path);
    spec.timeout_ms = get_int(obj, where, "timeout_ms", spec.timeout_ms);
    spec.max_attempts = get_int(obj, where, "max_attempts", spec.max_attempts);
    spec.backoff_initial_ms = get_int(obj, where, "backoff_initial_ms", spec.backoff_initial_ms);
    if (spec.timeout_ms <= 0 || spec.max_attempts <= 0 || spec.backoff_initial_ms < 0) {
        throw ConfigError("config field " + where +
                          " has a non-positive timeout, attempt count, or backoff");
    }
    return spec;
}

MockScorerConfig parse_mock_scorer_config(const json& obj, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError("config field " + where + " must be an object");
    }
    MockScorerConfig config;
    const json* options = find_member(obj, "options");
    if (options == nullptr || !options->is_array()) {
        bad_field(where, "options", "an array of strings");
    }
    for (const json& option : *options) {
        if (!option.is_string()) {
            bad_field(where, "options", "an array of strings");
        }
        config.options.push_back(option.get<std::string>());
    }
    const json* bases = find_member(obj, "base_scores");
    if (bases == nullptr || !bases->is_array()) {
        bad_field(where, "base_scores", "an array of numbers");
    }
    for (const json& base : *bases) {
        if (!base.is_number()) {
            bad_field(where, "base_scores", "an array of numbers");
        }
        config.base_scores.push_back(base.get<double>());
    }
    if (const json* rules = find_member(obj, "rules")) {
        if (!rules->is_array()) {
            bad_field(where, "rules", "an array of rule objects");
        }
        std::size_t i = 0;
        for (const json& rule : *rules) {
            std::string rule_where = where + ".rules[" + std::to_string(i++) + "]";
            MockScoreRule parsed;
            parsed.keyword = require_string(rule, rule_where, "keyword");
            parsed.option_index = get_int(rule, rule_where, "option_index", -1);
            parsed.delta = get_double(rule, rule_where, "delta", 0.0);
            config.rules.push_back(std::move(parsed));
        }
    }
    validate_mock_config(config);
    return config;
}

std::vector<EditPair> parse_edit_list(const json& arr, const std::string& where) {
    if (!arr.is_array()) {
        throw ConfigError("config field " + where + " must be an array of edits");
    }
    std::vector<EditPair> edits;
    std::size_t i = 0;
    for (const json& entry : arr) {
        std::string entry_where = where + "[" + std::to_string(i++) + "]";
        EditPair edit;
        if (entry.is_array() && entry.size() == 2 && entry[0].is_string() &&
            entry[1].is_string()) {
            edit.prev = entry[0].get<std::string>();
            edit.next = entry[1].get<std::string>();
        } else if (entry.is_object()) {
            edit.prev = require_string(entry, entry_where, "prev");
            edit.next = get_string(entry, entry_where, "new", "");
        } else {
            throw ConfigError("config field " + entry_where +
                              " must be [prev, new] or {\"prev\": .., \"new\": ..}");
        }
        edits.push_back(std::move(edit));
    }
    return edits;
}

GeneratorSpec parse_generator_spec(const json& obj) {
    GeneratorSpec spec;
    std::string kind = get_string(obj, "generator", "kind", "random");
    if (kind == "http") {
        spec.kind = GeneratorSpec::Kind::http;
        const json* http = find_member(obj, "http");
        if (http == nullptr) {
            throw ConfigError("generator.kind \"http\" requires a generator.http object");
        }
        spec.http = parse_http_spec(*http, "generator.http");
    } else if (kind == "scripted") {
        spec.kind = GeneratorSpec::Kind::scripted;
        if (const json* scripts = find_member(obj, "scripts")) {
            if (!scripts->is_object()) {
                bad_field("generator", "scripts", "an object mapping questions to edit lists");
            }
            for (const auto& [question, edits] : scripts->items()) {
                spec.scripts[question] =
                    parse_edit_list(edits, "generator.scripts[\"" + question + "\"]");
            }
        }
    } else if (kind == "random") {
        spec.kind = GeneratorSpec::Kind::random;
    } else {
        throw ConfigError("generator.kind must be \"http\", \"scripted\", or \"random\", got \"" +
                          kind + "\"");
    }
    return spec;
}

ScorerSpec parse_scorer_spec(const json& obj) {
    ScorerSpec spec;
    std::string kind = get_string(obj, "scorer", "kind", "default-world");
    if (kind == "http") {
        spec.kind = ScorerSpec::Kind::http;
        const json* http = find_member(obj, "http");
        if (http == nullptr) {
            throw ConfigError("scorer.kind \"http\" requires a scorer.http object");
        }
        spec.http = parse_http_spec(*http, "scorer.http");
    } else if (kind == "mock") {
        spec.kind = ScorerSpec::Kind::mock;
        if (const json* def = find_member(obj, "default_config")) {
            spec.default_config = parse_mock_scorer_config(*def, "scorer.default_config");
        }
        if (const json* configs = find_member(obj, "instance_configs")) {
            if (!configs->is_object()) {
                bad_field("scorer", "instance_configs", "an object keyed by image ref");
            }
            for (const auto& [ref, config] : configs->items()) {
                spec.instance_configs[ref] = parse_mock_scorer_config(
                    config, "scorer.instance_configs[\"" + ref + "\"]");
            }
        }
        if (!spec.default_config && spec.instance_configs.empty()) {
            throw ConfigError(
                "scorer.kind \"mock\" requires default_config or instance_configs");
        }
    } else if (kind == "default-world") {
        spec.kind = ScorerSpec::Kind::default_world;
    } else {
        throw ConfigError(
            "scorer.kind must be \"http\", \"mock\", or \"default-world\", got \"" + kind + "\"");
    }
    return spec;
}

EvaluatorSpec parse_evaluator_spec(const json& obj) {
    EvaluatorSpec spec;
    std::string kind = get_string(obj, "evaluator", "kind", "mock");
    if (kind == "http") {
        spec.kind = EvaluatorSpec::Kind::http;
        const json* http = find_member(obj, "http");
        if (http == nullptr) {
            throw ConfigError("evaluator.kind \"http\" requires an evaluator.http object");
        }
        spec.http = parse_http_spec(*http, "evaluator.http");
    } else if (kind == "mock") {
        spec.kind = EvaluatorSpec::Kind::mock;
        if (const json* pinned = find_member(obj, "pinned")) {
            if (!pinned->is_object()) {
                bad_field("evaluator", "pinned", "an object mapping text to a logprob");
            }
            for (const auto& [text, lp] : pinned->items()) {
                if (!lp.is_number()) {
                    bad_field("evaluator", "pinned", "an object mapping text to a logprob");
                }
                spec.pinned[text] = lp.get<double>();
            }
        }
    } else {
        throw ConfigError("evaluator.kind must be \"http\" or \"mock\", got \"" + kind + "\"");
    }
    return spec;
}

EmbedderSpec parse_embedder_spec(const json& obj) {
    EmbedderSpec spec;
    std::string kind = get_string(obj, "embedder", "kind", "mock");
    if (kind == "http") {
        spec.kind = EmbedderSpec::Kind::http;
        const json* http = find_member(obj, "http");
        if (http == nullptr) {
            throw ConfigError("embedder.kind \"http\" requires an embedder.http object");
        }
        spec.http = parse_http_spec(*http, "embedder.http");
    } else if (kind == "mock") {
        spec.kind = EmbedderSpec::Kind::mock;
        int dim = get_int(obj, "embedder", "dim", static_cast<int>(spec.dim));
        if (dim < 1) {
            bad_field("embedder", "dim", "a positive integer");
        }
        spec.dim = static_cast<std::size_t>(dim);
    } else {
        throw ConfigError("embedder.kind must be \"http\" or \"mock\", got \"" + kind + "\"");
    }
    return spec;
}

std::string sanitize_filename(const std::string& id) {
    std::string out;
    out.reserve(id.size());
    for (char c : id) {
        bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
        out += safe ? c : '_';
    }
    if (out.empty()) {
        out = "_";
    }
    return out;
}

/// Streams rows to <final>.jsonl in dataset order as workers finish out of
/// order. The stream opens under a .partial name and is renamed into place
/// immediately (the open descriptor survives the rename), so the visible
/// file is always a clean dataset-order prefix of the run and a crash leaves
/// exactly what resume needs.
class OrderedResultsWriter {
public:
    OrderedResultsWriter(std::string path, bool include_timings, std::size_t total)
        : path_(std::move(path)), include_timings_(include_timings), total_(total) {
        std::string partial = path_ + ".partial";
        out_.open(partial, std::ios::binary | std::ios::trunc);
        if (!out_) {
            throw Error("cannot open " + partial + " for writing");
        }
        std::error_code ec;
        std::filesystem::rename(partial, path_, ec);
        if (ec) {
            throw Error("cannot move " + partial + " to " + path_ + ": " + ec.message());
        }
    }

    void deliver(std::size_t index, ResultRow row) {
        std::lock_guard<std::mutex> lock(mu_);
        pending_.emplace(index, std::move(row));
        bool wrote = false;
        for (auto it = pending_.find(next_); it != pending_.end();
             it = pending_.find(++next_)) {
            out_ << serialize_result_row(it->second, include_timings_) << '\n';
            rows_.push_back(std::move(it->second));
            pending_.erase(it);
            wrote = true;
        }
        if (wrote) {
            out_.flush();
            if (!out_) {
                throw Error("writing " + path_ + " failed");
            }
        }
    }

    std::vector<ResultRow> finish() {
        std::lock_guard<std::mutex> lock(mu_);
        if (next_ != total_ || !pending_.empty()) {
            throw Error("results writer finished with " + std::to_string(next_) + " of " +
                        std::to_string(total_) + " rows");
        }
        out_.close();
        return std::move(rows_);
    }

private:
    std::string path_;
    bool include_timings_;
    std::size_t total_;
    std::ofstream out_;
    std::mutex mu_;
    std::size_t next_ = 0;
    std::unordered_map<std::size_t, ResultRow> pending_;
    std::vector<ResultRow> rows_;
};

json manifest_to_json(const RunManifest& manifest) {
    json statuses = json::array();
    for (const InstanceStatus& status : manifest.statuses) {
        statuses.push_back(
            {{"id", status.id}, {"outcome", status.outcome}, {"reused", status.reused}});
    }
    return json{{"schema_version", manifest.schema_version},
                {"started_at", manifest.started_at},
                {"finished_at", manifest.finished_at},
                {"seed", manifest.seed},
                {"dataset_path", manifest.dataset_path},
                {"prompt_template_version", manifest.prompt_template_version},
                {"prompt_template_hash", manifest.prompt_template_hash},
                {"config_snapshot", manifest.config_snapshot},
                {"depth1", manifest.depth1},
                {"ppl_threshold", manifest.ppl_threshold},
                {"counts",
                 {{"total", manifest.total},
                  {"attacked", manifest.attacked},
                  {"successes", manifest.successes},
                  {"skipped", manifest.skipped},
                  {"errored", manifest.errored},
                  {"reused", manifest.reused}}},
                {"statuses", statuses}};
}

}  // namespace

void RunConfig::validate() const {
    if (dataset_path.empty()) {
        throw ConfigError("dataset.path is required");
    }
    if (out_dir.empty()) {
        throw ConfigError("out_dir must not be empty");
    }
    if (parallelism < 1) {
        throw ConfigError("parallelism must be >= 1, got " + std::to_string(parallelism));
    }
    if (!(ppl_threshold > 0.0)) {
        throw ConfigError("ppl_threshold must be positive");
    }
    if (non_latin_flag_ratio < 0.0 || non_latin_flag_ratio > 1.0) {
        throw ConfigError("non_latin_flag_ratio must lie in [0, 1]");
    }
    search.validate();
    if (generator.kind == GeneratorSpec::Kind::http && generator.http.base_url.empty()) {
        throw ConfigError("generator.http.base_url is required for an http generator");
    }
    if (scorer.kind == ScorerSpec::Kind::http && scorer.http.base_url.empty()) {
        throw ConfigError("scorer.http.base_url is required for an http scorer");
    }
    if (scorer.kind == ScorerSpec::Kind::mock && !scorer.default_config &&
        scorer.instance_configs.empty()) {
        throw ConfigError("a mock scorer needs default_config or instance_configs");
    }
    if (evaluator.kind == EvaluatorSpec::Kind::http && evaluator.http.base_url.empty()) {
        throw ConfigError("evaluator.http.base_url is required for an http evaluator");
    }
    if (embedder.kind == EmbedderSpec::Kind::http && embedder.http.base_url.empty()) {
        throw ConfigError("embedder.http.base_url is required for an http embedder");
    }
    if (embedder.kind == EmbedderSpec::Kind::mock && embedder.dim == 0) {
        throw ConfigError("embedder.dim must be >= 1");
    }
}

RunConfig parse_run_config(const std::string& json_text, const std::string& source_name) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(source_name + ": " + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError(source_name + ": top level must be a JSON object");
    }

    static const char* known_keys[] = {
        "dataset",   "seed",        "out_dir",           "parallelism",
        "resume",    "trace",       "depth1",            "include_timings",
        "ppl_threshold", "non_latin_flag_ratio", "rate_limit_rps", "search",
        "generator", "scorer",      "evaluator",         "embedder"};
    for (const auto& [key, value] : root.items()) {
        bool known = false;
        for (const char* k : known_keys) {
            if (key == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(source_name + ": unknown config key \"" + key + "\"");
        }
    }

    interpolate_tree(root, source_name);

    RunConfig config;
    config.source_text = json_text;

    const json* dataset = find_member(root, "dataset");
    if (dataset == nullptr || !dataset->is_object()) {
        throw ConfigError(source_name + ": a dataset object with a path is required");
    }
    config.dataset_path = require_string(*dataset, "dataset", "path");
    std::string format = get_string(*dataset, "dataset", "format", "native-jsonl");
    config.dataset_format = parse_dataset_format(format);

    config.seed = get_seed(root, "", "seed", config.seed);
    config.out_dir = get_string(root, "", "out_dir", config.out_dir);
    config.parallelism = get_int(root, "", "parallelism", config.parallelism);
    config.resume = get_bool(root, "", "resume", config.resume);
    config.trace = get_bool(root, "", "trace", config.trace);
    config.depth1 = get_bool(root, "", "depth1", config.depth1);
    config.include_timings = get_bool(root, "", "include_timings", config.include_timings);
    config.ppl_threshold = get_double(root, "", "ppl_threshold", config.ppl_threshold);
    config.non_latin_flag_ratio =
        get_double(root, "", "non_latin_flag_ratio", config.non_latin_flag_ratio);
    config.rate_limit_rps = get_double(root, "", "rate_limit_rps", config.rate_limit_rps);

    if (const json* search = find_member(root, "search")) {
        config.search.max_iterations =
            get_int(*search, "search", "max_iterations", config.search.max_iterations);
        config.search.max_depth = get_int(*search, "search", "max_depth", config.search.max_depth);
        config.search.exploration_c =
            get_double(*search, "search", "exploration_c", config.search.exploration_c);
        config.search.branching = get_int(*search, "search", "branching", config.search.branching);
        config.search.reward_sign =
            get_int(*search, "search", "reward_sign", config.search.reward_sign);
        config.search.expansion_attempt_budget = get_int(
            *search, "search", "expansion_attempt_budget", config.search.expansion_attempt_budget);
    }

    if (const json* generator = find_member(root, "generator")) {
        config.generator = parse_generator_spec(*generator);
    }
    if (const json* scorer = find_member(root, "scorer")) {
        config.scorer = parse_scorer_spec(*scorer);
    }
    if (const json* evaluator = find_member(root, "evaluator")) {
        config.evaluator = parse_evaluator_spec(*evaluator);
    }
    if (const json* embedder = find_member(root, "embedder")) {
        config.embedder = parse_embedder_spec(*embedder);
    }

    config.validate();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str(), path);
}

void force_mock_backends(RunConfig& config) {
    if (config.generator.kind == GeneratorSpec::Kind::http) {
        config.generator.kind = GeneratorSpec::Kind::random;
    }
    if (config.scorer.kind == ScorerSpec::Kind::http) {
        config.scorer.kind = ScorerSpec::Kind::default_world;
    }
    if (config.evaluator.kind == EvaluatorSpec::Kind::http) {
        config.evaluator.kind = EvaluatorSpec::Kind::mock;
    }
    if (config.embedder.kind == EmbedderSpec::Kind::http) {
        config.embedder.kind = EmbedderSpec::Kind::mock;
    }
}

BackendSet build_backends(const RunConfig& config, const std::vector<McqInstance>& instances) {
    BackendSet set;
    set.limiter = std::make_shared<RateLimiter>(config.rate_limit_rps);

    switch (config.generator.kind) {
        case GeneratorSpec::Kind::http:
            set.generator = std::make_shared<HttpEditGenerator>(config.generator.http, set.limiter);
            break;
        case GeneratorSpec::Kind::scripted: {
            auto scripted = std::make_shared<ScriptedEditGenerator>();
            for (const auto& [question, edits] : config.generator.scripts) {
                scripted->script(question, edits);
            }
            set.generator = scripted;
            break;
        }
        case GeneratorSpec::Kind::random:
            set.generator = std::make_shared<RandomEditGenerator>(config.seed);
            break;
    }

    switch (config.scorer.kind) {
        case ScorerSpec::Kind::http:
            set.scorer = std::make_shared<HttpScorer>(config.scorer.http, set.limiter);
            break;
        case ScorerSpec::Kind::mock: {
            auto mock = std::make_shared<MockScorer>();
            if (config.scorer.default_config) {
                validate_mock_config(*config.scorer.default_config);
                mock->set_default_config(*config.scorer.default_config);
            }
            for (const auto& [ref, scorer_config] : config.scorer.instance_configs) {
                validate_mock_config(scorer_config);
                mock->add_config(ref, scorer_config);
            }
            set.scorer = mock;
            break;
        }
        case ScorerSpec::Kind::default_world: {
            auto mock = std::make_shared<MockScorer>();
            for (const McqInstance& instance : instances) {
                mock->add_config(default_world_ref(instance.id),
                                 default_world_config(instance, config.seed));
            }
            set.scorer = mock;
            set.default_world = true;
            break;
        }
    }

    switch (config.evaluator.kind) {
        case EvaluatorSpec::Kind::http:
            set.evaluator = std::make_shared<HttpScorer>(config.evaluator.http, set.limiter);
            break;
        case EvaluatorSpec::Kind::mock: {
            auto mock = std::make_shared<MockPerplexityEvaluator>(config.seed);
            for (const auto& [text, logprob] : config.evaluator.pinned) {
                mock->set_uniform_logprob(text, logprob);
            }
            set.evaluator = mock;
            break;
        }
    }

    switch (config.embedder.kind) {
        case EmbedderSpec::Kind::http:
            set.embedder = std::make_shared<HttpEmbedder>(config.embedder.http, set.limiter);
            break;
        case EmbedderSpec::Kind::mock:
            set.embedder = std::make_shared<MockEmbedder>(config.embedder.dim, config.seed);
            break;
    }

    return set;
}

std::vector<McqInstance> effective_instances(const BackendSet& backends,
                                             std::vector<McqInstance> instances) {
    if (backends.default_world) {
        for (McqInstance& instance : instances) {
            instance.image_ref = default_world_ref(instance.id);
        }
    }
    return instances;
}

PrescreenResult prescreen(const std::vector<McqInstance>& instances, ScorerBackend& scorer) {
    PrescreenResult result;
    for (const McqInstance& instance : instances) {
        try {
            ScoreReport report = score_options(scorer, instance, instance.question);
            bool correct = report.predicted_index == report.truth_index;
            result.root_reports.emplace(instance.id, std::move(report));
            (correct ? result.attackable : result.misclassified).push_back(instance);
        } catch (const Error& e) {
            result.errored.emplace_back(instance.id, e.what());
        }
    }
    return result;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open " + tmp + " for writing");
        }
        out << manifest_to_json(manifest).dump(2) << '\n';
        out.flush();
        if (!out) {
            throw Error("writing " + tmp + " failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error("cannot move " + tmp + " to " + path + ": " + ec.message());
    }
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open manifest " + path);
    }
    json parsed;
    try {
        parsed = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path + ": " + e.what());
    }
    RunManifest manifest;
    try {
        manifest.schema_version = parsed.at("schema_version").get<int>();
        manifest.started_at = parsed.at("started_at").get<std::string>();
        manifest.finished_at = parsed.at("finished_at").get<std::string>();
        manifest.seed = parsed.at("seed").get<std::uint64_t>();
        manifest.dataset_path = parsed.at("dataset_path").get<std::string>();
        manifest.prompt_template_version = parsed.at("prompt_template_version").get<std::string>();
        manifest.prompt_template_hash = parsed.at("prompt_template_hash").get<std::string>();
        manifest.config_snapshot = parsed.at("config_snapshot").get<std::string>();
        manifest.depth1 = parsed.at("depth1").get<bool>();
        manifest.ppl_threshold = parsed.at("ppl_threshold").get<double>();
        const json& counts = parsed.at("counts");
        manifest.total = counts.at("total").get<std::size_t>();
        manifest.attacked = counts.at("attacked").get<std::size_t>();
        manifest.successes = counts.at("successes").get<std::size_t>();
        manifest.skipped = counts.at("skipped").get<std::size_t>();
        manifest.errored = counts.at("errored").get<std::size_t>();
        manifest.reused = counts.at("reused").get<std::size_t>();
        for (const json& status : parsed.at("statuses")) {
            InstanceStatus parsed_status;
            parsed_status.id = status.at("id").get<std::string>();
            parsed_status.outcome = status.at("outcome").get<std::string>();
            parsed_status.reused = status.at("reused").get<bool>();
            manifest.statuses.push_back(std::move(parsed_status));
        }
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path + ": " + e.what());
    }
    return manifest;
}

BatchResult run_batch(const RunConfig& config) {
    config.validate();

    std::vector<McqInstance> instances = load_dataset(config.dataset_path, config.dataset_format);
    BackendSet backends = build_backends(config, instances);
    instances = effective_instances(backends, std::move(instances));

    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) {
        throw Error("cannot create output directory " + config.out_dir + ": " + ec.message());
    }
    std::string traces_dir = config.out_dir + "/traces";
    if (config.trace) {
        std::filesystem::create_directories(traces_dir, ec);
        if (ec) {
            throw Error("cannot create trace directory " + traces_dir + ": " + ec.message());
        }
    }

    std::string results_path = config.out_dir + "/results.jsonl";
    std::string manifest_path = config.out_dir + "/manifest.json";

    std::unordered_map<std::string, ResultRow> reusable;
    if (config.resume) {
        for (ResultRow& row : load_results_prefix(results_path)) {
            std::string id = row.record.instance_id;
            reusable.emplace(std::move(id), std::move(row));
        }
    }

    RunManifest manifest;
    manifest.started_at = iso8601_utc_now();
    manifest.seed = config.seed;
    manifest.dataset_path = config.dataset_path;
    manifest.prompt_template_version = std::string(edit_prompt_template_version());
    manifest.prompt_template_hash = to_hex(edit_prompt_template_hash());
    manifest.config_snapshot = config.source_text;
    manifest.depth1 = config.depth1;
    manifest.ppl_threshold = config.ppl_threshold;
    manifest.total = instances.size();

    OrderedResultsWriter writer(results_path, config.include_timings, instances.size());
    EmbedderGateway embed_gateway(backends.embedder);

    std::vector<char> reused_flags(instances.size(), 0);
    std::atomic<std::size_t> cursor{0};
    std::mutex error_mu;
    std::exception_ptr first_error;

    auto fail = [&](std::exception_ptr error) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) {
            first_error = std::move(error);
        }
    };
    auto failed = [&]() {
        std::lock_guard<std::mutex> lock(error_mu);
        return static_cast<bool>(first_error);
    };

    auto worker = [&]() {
        try {
            for (;;) {
                std::size_t index = cursor.fetch_add(1);
                if (index >= instances.size() || failed()) {
                    return;
                }
                const McqInstance& instance = instances[index];
                ResultRow row;
                auto reused = reusable.find(instance.id);
                if (reused != reusable.end()) {
                    row = reused->second;
                    reused_flags[index] = 1;
                } else {
                    std::ofstream trace_out;
                    std::unique_ptr<JsonlTraceSink> trace;
                    if (config.trace) {
                        std::string trace_path =
                            traces_dir + "/" + sanitize_filename(instance.id) + ".jsonl";
                        trace_out.open(trace_path, std::ios::binary | std::ios::trunc);
                        if (!trace_out) {
                            throw Error("cannot open trace file " + trace_path);
                        }
                        trace = std::make_unique<JsonlTraceSink>(trace_out);
                    }
                    row.record = config.depth1
                                     ? run_attack_depth1(instance, *backends.generator,
                                                         *backends.scorer, config.search,
                                                         trace.get())
                                     : run_attack(instance, *backends.generator, *backends.scorer,
                                                  config.search, trace.get());
                    if (row.record.success && !row.record.errored) {
                        try {
                            row.quality = assess_quality(*backends.evaluator, embed_gateway,
                                                         row.record, config.ppl_threshold,
                                                         config.non_latin_flag_ratio);
                        } catch (const Error& e) {
                            row.record.errored = true;
                            row.record.outcome = "error";
                            row.record.error = std::string("quality assessment: ") + e.what();
                        }
                    }
                }
                writer.deliver(index, std::move(row));
            }
        } catch (...) {
            fail(std::current_exception());
        }
    };

    std::size_t thread_count = static_cast<std::size_t>(config.parallelism);
    thread_count = std::min(thread_count, std::max<std::size_t>(instances.size(), 1));
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(thread_count);
        for (std::size_t i = 0; i < thread_count; ++i) {
            threads.emplace_back(worker);
        }
        for (std::thread& thread : threads) {
            thread.join();
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }

    BatchResult batch;
    batch.rows = writer.finish();
    batch.results_path = results_path;
    batch.manifest_path = manifest_path;

    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
        const AttackRecord& record = batch.rows[i].record;
        InstanceStatus status;
        status.id = record.instance_id;
        status.outcome = record.outcome;
        status.reused = reused_flags[i] != 0;
        manifest.statuses.push_back(std::move(status));
        if (record.errored) {
            manifest.errored += 1;
        } else if (record.skipped_pre_misclassified) {
            manifest.skipped += 1;
        } else {
            manifest.attacked += 1;
            if (record.success) {
                manifest.successes += 1;
            }
        }
        if (reused_flags[i] != 0) {
            manifest.reused += 1;
        }
    }
    manifest.finished_at = iso8601_utc_now();
    write_manifest(manifest_path, manifest);
    batch.manifest = manifest;
    return batch;
}

}  // namespace editflip
