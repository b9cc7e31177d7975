#pragma once

#include <string>
#include <vector>

#include "editflip/quality.hpp"

namespace editflip {

inline constexpr int kResultsSchemaVersion = 1;

/// One results.jsonl line. Keys come out sorted (stable canonical form), so
/// identical rows serialize to identical bytes. Timings are excluded unless
/// requested: deterministic mock runs must not leak wall-clock noise into
/// the output.
std::string serialize_result_row(const ResultRow& row, bool include_timings);

/// Inverse of serialize_result_row. Throws Error on malformed input or an
/// unsupported schema_version.
ResultRow parse_result_row(const std::string& line);

/// All rows of a results file; malformed lines raise Error with the
/// 1-based line number.
std::vector<ResultRow> load_results(const std::string& path);

/// Longest valid prefix of a results file, tolerating one torn or corrupt
/// tail line (everything from the first bad line on is dropped). Used by
/// resume after a crash mid-append.
std::vector<ResultRow> load_results_prefix(const std::string& path);

}  // namespace editflip
