#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "editflip/dataset.hpp"
#include "editflip/edits.hpp"
#include "editflip/errors.hpp"
#include "editflip/mock_server.hpp"
#include "editflip/report.hpp"
#include "editflip/results.hpp"
#include "editflip/runner.hpp"
#include "editflip/scoring.hpp"

namespace {

using editflip::ConfigError;
using editflip::Error;
using editflip::RunConfig;

/// Flags shared by the subcommands that assemble a RunConfig. Every flag
/// overrides the corresponding config-file field only when actually passed.
struct ConfigOpts {
    std::string config_path;
    std::string dataset;
    std::string dataset_format;
    std::uint64_t seed = 0;
    std::string out;
    double ppl_threshold = 0.0;
    int reward_sign = 0;
    int parallelism = 0;
    bool mock = false;
    bool depth1 = false;
    bool trace = false;
    bool resume = false;

    CLI::Option* dataset_opt = nullptr;
    CLI::Option* format_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* ppl_opt = nullptr;
    CLI::Option* sign_opt = nullptr;
    CLI::Option* parallelism_opt = nullptr;
};

void add_config_opts(CLI::App* cmd, ConfigOpts& opts, bool with_search_flags) {
    cmd->add_option("--config", opts.config_path, "JSON run config file");
    opts.dataset_opt =
        cmd->add_option("--dataset", opts.dataset, "dataset file (overrides the config)");
    opts.format_opt = cmd->add_option("--dataset-format", opts.dataset_format,
                                      "native-jsonl or u2bench-mcq");
    opts.seed_opt = cmd->add_option("--seed", opts.seed, "run seed");
    opts.out_opt = cmd->add_option("--out", opts.out, "output directory");
    cmd->add_flag("--mock", opts.mock, "replace every http backend with its in-process mock");
    if (with_search_flags) {
        opts.ppl_opt = cmd->add_option("--ppl-threshold", opts.ppl_threshold,
                                       "perplexity retention threshold (strict <)");
        opts.sign_opt =
            cmd->add_option("--reward-sign", opts.reward_sign, "search reward sign, -1 or +1");
        opts.parallelism_opt =
            cmd->add_option("--parallelism", opts.parallelism, "max concurrent attacks");
        cmd->add_flag("--depth1", opts.depth1, "ablation: cap the search at depth 1");
        cmd->add_flag("--trace", opts.trace, "write per-instance search traces");
        cmd->add_flag("--resume", opts.resume, "reuse rows already in results.jsonl");
    }
}

RunConfig assemble_config(const ConfigOpts& opts) {
    RunConfig config;
    if (!opts.config_path.empty()) {
        config = editflip::load_run_config(opts.config_path);
    }
    if (opts.dataset_opt != nullptr && opts.dataset_opt->count() > 0) {
        config.dataset_path = opts.dataset;
    }
    if (opts.format_opt != nullptr && opts.format_opt->count() > 0) {
        config.dataset_format = editflip::parse_dataset_format(opts.dataset_format);
    }
    if (opts.seed_opt != nullptr && opts.seed_opt->count() > 0) {
        config.seed = opts.seed;
    }
    if (opts.out_opt != nullptr && opts.out_opt->count() > 0) {
        config.out_dir = opts.out;
    }
    if (opts.ppl_opt != nullptr && opts.ppl_opt->count() > 0) {
        config.ppl_threshold = opts.ppl_threshold;
    }
    if (opts.sign_opt != nullptr && opts.sign_opt->count() > 0) {
        config.search.reward_sign = opts.reward_sign;
    }
    if (opts.parallelism_opt != nullptr && opts.parallelism_opt->count() > 0) {
        config.parallelism = opts.parallelism;
    }
    if (opts.mock) {
        editflip::force_mock_backends(config);
    }
    if (opts.depth1) {
        config.depth1 = true;
    }
    if (opts.trace) {
        config.trace = true;
    }
    if (opts.resume) {
        config.resume = true;
    }
    return config;
}

int run_screen(const ConfigOpts& opts) {
    RunConfig config = assemble_config(opts);
    config.validate();
    std::vector<editflip::McqInstance> instances =
        editflip::load_dataset(config.dataset_path, config.dataset_format);
    editflip::BackendSet backends = editflip::build_backends(config, instances);
    instances = editflip::effective_instances(backends, std::move(instances));

    editflip::PrescreenResult screen = editflip::prescreen(instances, *backends.scorer);
    std::cout << "screened " << instances.size() << " instances: " << screen.attackable.size()
              << " attackable, " << screen.misclassified.size() << " pre-misclassified, "
              << screen.errored.size() << " errored\n";
    for (const auto& [id, cause] : screen.errored) {
        std::cerr << "  error " << id << ": " << cause << "\n";
    }

    if (opts.out_opt != nullptr && opts.out_opt->count() > 0) {
        std::error_code ec;
        std::filesystem::create_directories(config.out_dir, ec);
        if (ec) {
            throw Error("cannot create " + config.out_dir + ": " + ec.message());
        }
        nlohmann::json reports = nlohmann::json::object();
        for (const auto& [id, report] : screen.root_reports) {
            reports[id] = {{"option_scores", report.option_scores},
                           {"predicted_index", report.predicted_index},
                           {"truth_index", report.truth_index},
                           {"margin", report.margin}};
        }
        nlohmann::json errored = nlohmann::json::array();
        for (const auto& [id, cause] : screen.errored) {
            errored.push_back({{"id", id}, {"error", cause}});
        }
        auto ids = [](const std::vector<editflip::McqInstance>& list) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& instance : list) {
                out.push_back(instance.id);
            }
            return out;
        };
        nlohmann::json doc{{"schema_version", editflip::kReportSchemaVersion},
                           {"attackable", ids(screen.attackable)},
                           {"misclassified", ids(screen.misclassified)},
                           {"errored", errored},
                           {"reports", reports}};
        std::string path = config.out_dir + "/screen.json";
        std::ofstream out_file(path, std::ios::binary | std::ios::trunc);
        if (!out_file) {
            throw Error("cannot open " + path + " for writing");
        }
        out_file << doc.dump(2) << "\n";
        std::cout << "wrote " << path << "\n";
    }

    bool all_errored = !instances.empty() && screen.errored.size() == instances.size();
    return all_errored ? 1 : 0;
}

int run_attack_cmd(const ConfigOpts& opts) {
    RunConfig config = assemble_config(opts);
    editflip::BatchResult batch = editflip::run_batch(config);
    const editflip::RunManifest& manifest = batch.manifest;
    std::cout << "attacked " << manifest.attacked << " of " << manifest.total << " instances: "
              << manifest.successes << " flips, " << manifest.skipped << " pre-misclassified, "
              << manifest.errored << " errored";
    if (manifest.reused > 0) {
        std::cout << ", " << manifest.reused << " reused";
    }
    std::cout << "\nwrote " << batch.results_path << "\n";
    bool all_errored = manifest.total > 0 && manifest.errored == manifest.total;
    return all_errored ? 1 : 0;
}

int run_report(const std::string& in_path, const std::string& out_dir, double ppl_threshold) {
    std::vector<editflip::ResultRow> rows = editflip::load_results(in_path);
    std::string dir = out_dir;
    if (dir.empty()) {
        std::filesystem::path parent = std::filesystem::path(in_path).parent_path();
        dir = parent.empty() ? "." : parent.string();
    }
    editflip::ReportPaths paths = editflip::write_report_files(rows, dir, ppl_threshold);
    std::ifstream txt(paths.summary_txt, std::ios::binary);
    std::cout << txt.rdbuf();
    std::cout << "wrote " << paths.summary_json << ", " << paths.depth_hist_json << ", "
              << paths.margin_hist_json << "\n";
    return 0;
}

int run_replay(const ConfigOpts& opts, const std::string& in_path, const std::string& score_url) {
    RunConfig config = assemble_config(opts);
    if (!score_url.empty()) {
        config.scorer.kind = editflip::ScorerSpec::Kind::http;
        config.scorer.http = editflip::HttpBackendSpec{};
        config.scorer.http.base_url = score_url;
    }
    config.validate();
    std::vector<editflip::McqInstance> instances =
        editflip::load_dataset(config.dataset_path, config.dataset_format);
    editflip::BackendSet backends = editflip::build_backends(config, instances);
    instances = editflip::effective_instances(backends, std::move(instances));
    std::unordered_map<std::string, const editflip::McqInstance*> by_id;
    for (const auto& instance : instances) {
        by_id[instance.id] = &instance;
    }

    std::vector<editflip::ResultRow> rows = editflip::load_results(in_path);
    std::size_t successes = 0;
    std::size_t verified = 0;
    for (const editflip::ResultRow& row : rows) {
        const editflip::AttackRecord& record = row.record;
        if (!record.success || record.errored) {
            continue;
        }
        successes += 1;
        const auto found = by_id.find(record.instance_id);
        if (found == by_id.end()) {
            std::cerr << "replay " << record.instance_id << ": not in the dataset\n";
            continue;
        }
        try {
            std::string replayed =
                editflip::edit_path_replay(record.original_question, record.edit_path);
            if (replayed != record.final_question) {
                std::cerr << "replay " << record.instance_id
                          << ": edit path reproduces a different question\n";
                continue;
            }
            editflip::ScoreReport report =
                editflip::score_options(*backends.scorer, *found->second, replayed);
            if (!editflip::is_attack_success(report)) {
                std::cerr << "replay " << record.instance_id
                          << ": re-scored prediction did not flip (margin " << report.margin
                          << ")\n";
                continue;
            }
        } catch (const Error& e) {
            std::cerr << "replay " << record.instance_id << ": " << e.what() << "\n";
            continue;
        }
        verified += 1;
    }
    std::cout << "replay verified " << verified << " of " << successes
              << " successful attacks\n";
    return verified == successes ? 0 : 1;
}

volatile std::sig_atomic_t g_stop_requested = 0;

void handle_stop_signal(int) { g_stop_requested = 1; }

int run_mock_serve(const ConfigOpts& opts, const std::string& host, int port) {
    RunConfig config = assemble_config(opts);
    editflip::force_mock_backends(config);
    config.validate();
    std::vector<editflip::McqInstance> instances =
        editflip::load_dataset(config.dataset_path, config.dataset_format);
    editflip::BackendSet backends = editflip::build_backends(config, instances);

    editflip::MockServer server(backends.generator, backends.scorer, backends.evaluator,
                                backends.embedder);
    int bound = server.start(host, port);
    std::cout << "mock backends listening on http://" << host << ":" << bound << "\n"
              << "  POST /v1/chat/completions  edit generator\n"
              << "  POST /score                target scorer\n"
              << "  POST /eval/score           fluency evaluator\n"
              << "  POST /embed                embedder\n";
    std::cout.flush();

    std::signal(SIGINT, handle_stop_signal);
    std::signal(SIGTERM, handle_stop_signal);
    while (g_stop_requested == 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"black-box question-edit attacks on multiple-choice visual QA models"};
    app.require_subcommand(1);

    ConfigOpts screen_opts;
    CLI::App* screen_cmd =
        app.add_subcommand("screen", "score originals and split correct from misclassified");
    add_config_opts(screen_cmd, screen_opts, false);

    ConfigOpts attack_opts;
    CLI::App* attack_cmd = app.add_subcommand("attack", "run the edit search over a dataset");
    add_config_opts(attack_cmd, attack_opts, true);

    std::string report_in;
    std::string report_out;
    double report_ppl = editflip::kDefaultPplThreshold;
    CLI::App* report_cmd =
        app.add_subcommand("report", "aggregate results.jsonl into summaries and histograms");
    report_cmd->add_option("--in", report_in, "results.jsonl to aggregate")->required();
    report_cmd->add_option("--out", report_out, "output directory (default: alongside --in)");
    report_cmd->add_option("--ppl-threshold", report_ppl,
                           "perplexity retention threshold (strict <)");

    ConfigOpts replay_opts;
    std::string replay_in;
    std::string replay_score_url;
    CLI::App* replay_cmd =
        app.add_subcommand("replay", "re-verify recorded successful attacks against a scorer");
    add_config_opts(replay_cmd, replay_opts, false);
    replay_cmd->add_option("--in", replay_in, "results.jsonl to verify")->required();
    replay_cmd->add_option("--score-url", replay_score_url,
                           "score endpoint base URL (overrides the config scorer)");

    ConfigOpts serve_opts;
    std::string serve_host = "127.0.0.1";
    int serve_port = 0;
    CLI::App* serve_cmd =
        app.add_subcommand("mock-serve", "serve the in-process mock backends over HTTP");
    add_config_opts(serve_cmd, serve_opts, false);
    serve_cmd->add_option("--host", serve_host, "bind address");
    serve_cmd->add_option("--port", serve_port, "port (0 picks one)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (screen_cmd->parsed()) {
            return run_screen(screen_opts);
        }
        if (attack_cmd->parsed()) {
            return run_attack_cmd(attack_opts);
        }
        if (report_cmd->parsed()) {
            return run_report(report_in, report_out, report_ppl);
        }
        if (replay_cmd->parsed()) {
            return run_replay(replay_opts, replay_in, replay_score_url);
        }
        if (serve_cmd->parsed()) {
            return run_mock_serve(serve_opts, serve_host, serve_port);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
