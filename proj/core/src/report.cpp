#include "editflip/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"

namespace editflip {
namespace {

using nlohmann::json;

bool counts_for_accuracy(const ResultRow& row) { return !row.record.errored; }

bool attacked(const ResultRow& row) {
    return !row.record.errored && !row.record.skipped_pre_misclassified;
}

const QualityReport& quality_or_throw(const ResultRow& row) {
    if (!row.quality) {
        throw ReportingError("successful instance \"" + row.record.instance_id +
                             "\" has no quality report");
    }
    return *row.quality;
}

std::optional<double> mean_of(const std::vector<double>& values) {
    if (values.empty()) {
        return std::nullopt;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    return sum / static_cast<double>(values.size());
}

std::optional<double> median_of(std::vector<double> values) {
    if (values.empty()) {
        return std::nullopt;
    }
    std::sort(values.begin(), values.end());
    std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) {
        return values[mid];
    }
    return 0.5 * (values[mid - 1] + values[mid]);
}

HistogramGroup bin_values(std::string label, const std::vector<double>& values,
                          const std::vector<double>& edges) {
    HistogramGroup group;
    group.label = std::move(label);
    group.counts.assign(edges.size() - 1, 0);
    group.total = values.size();
    for (double v : values) {
        if (v < edges.front() || v > edges.back()) {
            group.out_of_range += 1;
            continue;
        }
        std::size_t bin = edges.size() - 2;
        for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
            if (v < edges[i + 1]) {
                bin = i;
                break;
            }
        }
        group.counts[bin] += 1;
    }
    group.mean = mean_of(values);
    group.median = median_of(values);
    return group;
}

json group_to_json(const HistogramGroup& group) {
    json out{{"label", group.label},
             {"counts", group.counts},
             {"total", group.total},
             {"out_of_range", group.out_of_range}};
    if (group.mean) {
        out["mean"] = *group.mean;
    }
    if (group.median) {
        out["median"] = *group.median;
    }
    return out;
}

json histogram_to_json(const HistogramData& histogram) {
    json out{{"schema_version", kReportSchemaVersion}, {"name", histogram.name}};
    if (!histogram.categories.empty()) {
        out["categories"] = histogram.categories;
    }
    if (!histogram.bin_edges.empty()) {
        out["bin_edges"] = histogram.bin_edges;
    }
    json groups = json::array();
    for (const HistogramGroup& group : histogram.groups) {
        groups.push_back(group_to_json(group));
    }
    out["groups"] = groups;
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ReportingError("cannot open " + path + " for writing");
    }
    out << content;
    out.flush();
    if (!out) {
        throw ReportingError("writing " + path + " failed");
    }
}

std::string two_decimals(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.2f", value);
    return buffer;
}

}  // namespace

AccuracySummary summarize_accuracy(const std::vector<ResultRow>& rows, double ppl_threshold) {
    AccuracySummary summary;
    for (const ResultRow& row : rows) {
        if (!counts_for_accuracy(row)) {
            summary.errored += 1;
            continue;
        }
        summary.total += 1;
        if (row.record.skipped_pre_misclassified) {
            continue;
        }
        summary.pre_attack_correct += 1;
        if (!row.record.success) {
            continue;
        }
        summary.successes += 1;
        if (quality_or_throw(row).ppl < ppl_threshold) {
            summary.retained_successes += 1;
        }
    }
    summary.post_attack_correct_all = summary.pre_attack_correct - summary.successes;
    summary.post_attack_correct_filtered =
        summary.pre_attack_correct - summary.retained_successes;
    return summary;
}

HistogramData depth_histogram(const std::vector<ResultRow>& rows, bool retained_only) {
    std::vector<int> depths;
    for (const ResultRow& row : rows) {
        if (row.record.errored || !row.record.success) {
            continue;
        }
        if (retained_only && !quality_or_throw(row).retained_after_ppl) {
            continue;
        }
        depths.push_back(row.record.depth_of_success.value_or(0));
    }

    int max_depth = 1;
    for (int depth : depths) {
        max_depth = std::max(max_depth, depth);
    }

    HistogramData histogram;
    histogram.name = "depth_of_success";
    HistogramGroup group;
    group.label = retained_only ? "retained_successes" : "all_successes";
    group.counts.assign(static_cast<std::size_t>(max_depth), 0);
    for (int d = 1; d <= max_depth; ++d) {
        histogram.categories.push_back(std::to_string(d));
    }
    std::vector<double> raw;
    raw.reserve(depths.size());
    for (int depth : depths) {
        if (depth >= 1 && depth <= max_depth) {
            group.counts[static_cast<std::size_t>(depth - 1)] += 1;
        } else {
            group.out_of_range += 1;
        }
        raw.push_back(static_cast<double>(depth));
    }
    group.total = depths.size();
    group.mean = mean_of(raw);
    group.median = median_of(raw);
    histogram.groups.push_back(std::move(group));
    return histogram;
}

HistogramData margin_distributions(const std::vector<ResultRow>& rows,
                                   std::vector<double> bin_edges) {
    std::vector<double> success_margins;
    std::vector<double> failure_margins;
    for (const ResultRow& row : rows) {
        if (!attacked(row)) {
            continue;
        }
        (row.record.success ? success_margins : failure_margins).push_back(row.record.root_margin);
    }

    if (bin_edges.empty()) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const std::vector<double>* margins : {&success_margins, &failure_margins}) {
            for (double v : *margins) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        } else if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        const int bins = 20;
        for (int i = 0; i <= bins; ++i) {
            bin_edges.push_back(lo + (hi - lo) * static_cast<double>(i) / bins);
        }
        bin_edges.back() = hi;
    } else {
        if (bin_edges.size() < 2) {
            throw ReportingError("margin histogram needs at least two bin edges");
        }
        for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i) {
            if (!(bin_edges[i] < bin_edges[i + 1])) {
                throw ReportingError("margin histogram bin edges must be strictly increasing");
            }
        }
    }

    HistogramData histogram;
    histogram.name = "root_margin";
    histogram.bin_edges = bin_edges;
    histogram.groups.push_back(bin_values("success", success_margins, bin_edges));
    histogram.groups.push_back(bin_values("failure", failure_margins, bin_edges));
    return histogram;
}

ReportPaths write_report_files(const std::vector<ResultRow>& rows, const std::string& out_dir,
                               double ppl_threshold) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw ReportingError("cannot create report directory " + out_dir + ": " + ec.message());
    }

    AccuracySummary accuracy = summarize_accuracy(rows, ppl_threshold);

    std::vector<ResultRow> filtered_rows = rows;
    apply_ppl_filter(filtered_rows, ppl_threshold);
    HistogramData depth_all = depth_histogram(filtered_rows, false);
    HistogramData depth_retained = depth_histogram(filtered_rows, true);
    HistogramData depth_combined;
    depth_combined.name = depth_all.name;
    depth_combined.categories = depth_all.categories.size() >= depth_retained.categories.size()
                                    ? depth_all.categories
                                    : depth_retained.categories;
    for (HistogramData* part : {&depth_all, &depth_retained}) {
        HistogramGroup group = part->groups.front();
        group.counts.resize(depth_combined.categories.size(), 0);
        depth_combined.groups.push_back(std::move(group));
    }

    HistogramData margins = margin_distributions(rows);

    ReportPaths paths;
    paths.summary_json = out_dir + "/summary.json";
    paths.depth_hist_json = out_dir + "/depth_hist.json";
    paths.margin_hist_json = out_dir + "/margin_hist.json";
    paths.summary_txt = out_dir + "/summary.txt";

    json summary{{"schema_version", kReportSchemaVersion},
                 {"total", accuracy.total},
                 {"errored", accuracy.errored},
                 {"pre_attack_correct", accuracy.pre_attack_correct},
                 {"successes", accuracy.successes},
                 {"retained_successes", accuracy.retained_successes},
                 {"post_attack_correct_all", accuracy.post_attack_correct_all},
                 {"post_attack_correct_filtered", accuracy.post_attack_correct_filtered},
                 {"pre_acc", accuracy.pre_acc()},
                 {"post_acc_all", accuracy.post_acc_all()},
                 {"post_acc_filtered", accuracy.post_acc_filtered()},
                 {"ppl_threshold", ppl_threshold}};
    write_text_file(paths.summary_json, summary.dump(2) + "\n");
    write_text_file(paths.depth_hist_json, histogram_to_json(depth_combined).dump(2) + "\n");
    write_text_file(paths.margin_hist_json, histogram_to_json(margins).dump(2) + "\n");

    std::string txt;
    txt += "instances (non-errored): " + std::to_string(accuracy.total) + "\n";
    txt += "errored:                 " + std::to_string(accuracy.errored) + "\n";
    txt += "pre-attack correct:      " + std::to_string(accuracy.pre_attack_correct) + " (" +
           two_decimals(accuracy.pre_acc()) + "%)\n";
    txt += "attack successes:        " + std::to_string(accuracy.successes) + "\n";
    txt += "retained (ppl < " + two_decimals(ppl_threshold) +
           "):  " + std::to_string(accuracy.retained_successes) + "\n";
    txt += "post-attack correct:     " + std::to_string(accuracy.post_attack_correct_all) + " (" +
           two_decimals(accuracy.post_acc_all()) + "%)\n";
    txt += "post-attack, filtered:   " + std::to_string(accuracy.post_attack_correct_filtered) +
           " (" + two_decimals(accuracy.post_acc_filtered()) + "%)\n";
    write_text_file(paths.summary_txt, txt);

    return paths;
}

}  // namespace editflip
