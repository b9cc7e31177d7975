#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "editflip/mcq.hpp"

namespace editflip {

enum class DatasetFormat {
    native_jsonl,  // one McqInstance object per line, field names as-is
    u2bench_mcq,   // ultrasound-benchmark style MCQ records, adapted on load
};

/// Accepts "native-jsonl" and "u2bench-mcq"; throws ConfigError otherwise.
DatasetFormat parse_dataset_format(std::string_view name);
std::string_view dataset_format_name(DatasetFormat format);

/// Reads one instance per line, skipping blank lines. Malformed lines,
/// invalid instances, and duplicate ids raise DatasetError carrying the
/// 1-based line number.
std::vector<McqInstance> load_dataset(const std::string& path, DatasetFormat format);
std::vector<McqInstance> load_dataset(std::istream& in, DatasetFormat format,
                                      const std::string& source_name);

}  // namespace editflip
