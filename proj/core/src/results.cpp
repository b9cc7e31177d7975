#include "editflip/results.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"

namespace editflip {

namespace {

using nlohmann::json;

json edit_to_json(const EditPair& edit) {
    return json{{"prev", edit.prev}, {"new", edit.next}};
}

EditPair edit_from_json(const json& obj) {
    EditPair edit;
    edit.prev = obj.at("prev").get<std::string>();
    edit.next = obj.at("new").get<std::string>();
    return edit;
}

json report_to_json(const ScoreReport& report) {
    return json{{"option_scores", report.option_scores},
                {"predicted_index", report.predicted_index},
                {"truth_index", report.truth_index},
                {"margin", report.margin},
                {"question_text", report.question_text}};
}

ScoreReport report_from_json(const json& obj) {
    ScoreReport report;
    report.option_scores = obj.at("option_scores").get<std::vector<double>>();
    report.predicted_index = obj.at("predicted_index").get<int>();
    report.truth_index = obj.at("truth_index").get<int>();
    report.margin = obj.at("margin").get<double>();
    report.question_text = obj.at("question_text").get<std::string>();
    return report;
}

json stats_to_json(const ProposalStats& stats) {
    return json{{"generator_calls", stats.generator_calls},
                {"proposed", stats.proposed},
                {"accepted", stats.accepted},
                {"invalid", stats.invalid},
                {"duplicates", stats.duplicates},
                {"inapplicable", stats.inapplicable},
                {"parse_failures", stats.parse_failures}};
}

ProposalStats stats_from_json(const json& obj) {
    ProposalStats stats;
    stats.generator_calls = obj.at("generator_calls").get<std::size_t>();
    stats.proposed = obj.at("proposed").get<std::size_t>();
    stats.accepted = obj.at("accepted").get<std::size_t>();
    stats.invalid = obj.at("invalid").get<std::size_t>();
    stats.duplicates = obj.at("duplicates").get<std::size_t>();
    stats.inapplicable = obj.at("inapplicable").get<std::size_t>();
    stats.parse_failures = obj.at("parse_failures").get<std::size_t>();
    return stats;
}

json quality_to_json(const QualityReport& quality) {
    return json{{"ppl", quality.ppl},
                {"similarity", quality.similarity},
                {"non_latin_ratio", quality.non_latin_ratio},
                {"language_confusion", quality.language_confusion},
                {"retained_after_ppl", quality.retained_after_ppl}};
}

QualityReport quality_from_json(const json& obj) {
    QualityReport quality;
    quality.ppl = obj.at("ppl").get<double>();
    quality.similarity = obj.at("similarity").get<double>();
    quality.non_latin_ratio = obj.at("non_latin_ratio").get<double>();
    quality.language_confusion = obj.at("language_confusion").get<bool>();
    quality.retained_after_ppl = obj.at("retained_after_ppl").get<bool>();
    return quality;
}

}  // namespace

nlohmann::json result_row_to_json(const ResultRow& row, bool include_timings) {
    const AttackRecord& r = row.record;
    json obj;
    obj["schema_version"] = kResultsSchemaVersion;
    obj["instance_id"] = r.instance_id;
    obj["success"] = r.success;
    obj["skipped_pre_misclassified"] = r.skipped_pre_misclassified;
    obj["errored"] = r.errored;
    if (r.errored) {
        obj["error"] = r.error;
    }
    obj["outcome"] = r.outcome;
    obj["original_question"] = r.original_question;
    obj["final_question"] = r.final_question;
    json path = json::array();
    for (const EditPair& edit : r.edit_path) {
        path.push_back(edit_to_json(edit));
    }
    obj["edit_path"] = std::move(path);
    if (r.depth_of_success) {
        obj["depth_of_success"] = *r.depth_of_success;
    }
    obj["iterations_used"] = r.iterations_used;
    obj["root_margin"] = r.root_margin;
    if (r.root_report) {
        obj["root_report"] = report_to_json(*r.root_report);
    }
    if (r.final_report) {
        obj["final_report"] = report_to_json(*r.final_report);
    }
    obj["proposal_stats"] = stats_to_json(r.proposal_stats);
    obj["language_confusion_flags"] = r.language_confusion_flags;
    obj["nodes_created"] = r.nodes_created;
    if (include_timings) {
        obj["elapsed_ms"] = r.elapsed_ms;
    }
    if (row.quality) {
        obj["quality"] = quality_to_json(*row.quality);
    }
    return obj;
}

std::string serialize_result_row(const ResultRow& row, bool include_timings) {
    return result_row_to_json(row, include_timings).dump();
}

ResultRow parse_result_row(const std::string& line) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed result row: ") + e.what());
    }
    try {
        const int version = obj.at("schema_version").get<int>();
        if (version != kResultsSchemaVersion) {
            std::ostringstream msg;
            msg << "unsupported results schema_version " << version << " (expected "
                << kResultsSchemaVersion << ")";
            throw Error(msg.str());
        }
        ResultRow row;
        AttackRecord& r = row.record;
        r.instance_id = obj.at("instance_id").get<std::string>();
        r.success = obj.at("success").get<bool>();
        r.skipped_pre_misclassified = obj.at("skipped_pre_misclassified").get<bool>();
        r.errored = obj.at("errored").get<bool>();
        if (obj.contains("error")) {
            r.error = obj.at("error").get<std::string>();
        }
        r.outcome = obj.at("outcome").get<std::string>();
        r.original_question = obj.at("original_question").get<std::string>();
        r.final_question = obj.at("final_question").get<std::string>();
        for (const json& item : obj.at("edit_path")) {
            r.edit_path.push_back(edit_from_json(item));
        }
        if (obj.contains("depth_of_success")) {
            r.depth_of_success = obj.at("depth_of_success").get<int>();
        }
        r.iterations_used = obj.at("iterations_used").get<int>();
        r.root_margin = obj.at("root_margin").get<double>();
        if (obj.contains("root_report")) {
            r.root_report = report_from_json(obj.at("root_report"));
        }
        if (obj.contains("final_report")) {
            r.final_report = report_from_json(obj.at("final_report"));
        }
        r.proposal_stats = stats_from_json(obj.at("proposal_stats"));
        r.language_confusion_flags = obj.at("language_confusion_flags").get<std::size_t>();
        r.nodes_created = obj.at("nodes_created").get<std::size_t>();
        if (obj.contains("elapsed_ms")) {
            r.elapsed_ms = obj.at("elapsed_ms").get<double>();
        }
        if (obj.contains("quality")) {
            row.quality = quality_from_json(obj.at("quality"));
        }
        return row;
    } catch (const json::exception& e) {
        throw Error(std::string("result row missing required fields: ") + e.what());
    }
}

std::vector<ResultRow> load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open results file " + path);
    }
    std::vector<ResultRow> rows;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) {
            continue;
        }
        try {
            rows.push_back(parse_result_row(line));
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << path << ":" << line_number << ": " << e.what();
            throw Error(msg.str());
        }
    }
    return rows;
}

std::vector<ResultRow> load_results_prefix(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        return {};
    }
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            rows.push_back(parse_result_row(line));
        } catch (const Error&) {
            break;  // torn tail from a crash; resume rewrites from here
        }
    }
    return rows;
}

}  // namespace editflip
