#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "editflip/quality.hpp"

namespace editflip {

inline constexpr int kReportSchemaVersion = 1;

/// Accuracy before and after the attack, over all non-errored instances.
/// Initially misclassified instances count as incorrect in every column;
/// failed attacks stay correct post-attack; successes filtered out by the
/// perplexity threshold revert to correct in the filtered column only.
/// Counts are exact integers; the percentage accessors divide on demand and
/// rounding happens only at display time.
struct AccuracySummary {
    std::size_t total = 0;    // non-errored instances
    std::size_t errored = 0;  // excluded from every rate, reported separately
    std::size_t pre_attack_correct = 0;
    std::size_t successes = 0;
    std::size_t retained_successes = 0;  // successes with ppl < threshold
    std::size_t post_attack_correct_all = 0;
    std::size_t post_attack_correct_filtered = 0;

    double pre_acc() const { return percent(pre_attack_correct); }
    double post_acc_all() const { return percent(post_attack_correct_all); }
    double post_acc_filtered() const { return percent(post_attack_correct_filtered); }

    double percent(std::size_t count) const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
    }
};

/// Grouped histogram payload, plot-ready. Counts cover every contributing
/// record: total == sum(counts) + out_of_range.
struct HistogramGroup {
    std::string label;
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    std::size_t out_of_range = 0;  // only possible with caller-supplied edges
    std::optional<double> mean;    // over the group's raw values
    std::optional<double> median;
};

/// Either categorical (categories set, e.g. depth 1..D) or numeric
/// (bin_edges set, half-open bins with an inclusive last edge).
struct HistogramData {
    std::string name;
    std::vector<std::string> categories;
    std::vector<double> bin_edges;
    std::vector<HistogramGroup> groups;
};

/// Accuracy roll-up. `ppl_threshold` decides which successes count as
/// retained (strict ppl < threshold). Throws ReportingError when a
/// successful row is missing its quality report.
AccuracySummary summarize_accuracy(const std::vector<ResultRow>& rows, double ppl_threshold);

/// Successful attacks counted by depth_of_success, categories "1"..max
/// observed depth. With retained_only, only successes whose stored
/// retained_after_ppl flag is set contribute (missing quality on a success
/// throws ReportingError).
HistogramData depth_histogram(const std::vector<ResultRow>& rows, bool retained_only = false);

/// Root-margin histograms of attacked instances grouped by attack success.
/// Empty `bin_edges` selects 20 equal-width bins spanning the observed
/// min..max (a degenerate range widens to value ± 0.5). Custom edges must be
/// strictly increasing with at least two entries; values outside them count
/// as out_of_range.
HistogramData margin_distributions(const std::vector<ResultRow>& rows,
                                   std::vector<double> bin_edges = {});

struct ReportPaths {
    std::string summary_json;
    std::string depth_hist_json;
    std::string margin_hist_json;
    std::string summary_txt;
};

/// Writes summary.json, depth_hist.json, margin_hist.json, and summary.txt
/// into out_dir (created if needed). All JSON artifacts carry
/// schema_version. The depth histogram file holds both the unfiltered and
/// the retained group.
ReportPaths write_report_files(const std::vector<ResultRow>& rows, const std::string& out_dir,
                               double ppl_threshold);

}  // namespace editflip
