#include "editflip/dataset.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"
#include "editflip/util.hpp"

namespace editflip {

namespace {

using nlohmann::json;

std::string require_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        std::ostringstream msg;
        msg << "missing or non-string field \"" << key << "\"";
        throw DatasetError(line, msg.str());
    }
    return it->get<std::string>();
}

/// First present key among `keys`, or nullptr.
const json* first_of(const json& obj, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        auto it = obj.find(key);
        if (it != obj.end() && !it->is_null()) {
            return &*it;
        }
    }
    return nullptr;
}

std::vector<std::string> read_options(const json& value, std::size_t line) {
    if (!value.is_array()) {
        throw DatasetError(line, "options field is not an array");
    }
    std::vector<std::string> options;
    options.reserve(value.size());
    for (const auto& item : value) {
        if (!item.is_string()) {
            throw DatasetError(line, "options array contains a non-string entry");
        }
        options.push_back(item.get<std::string>());
    }
    return options;
}

McqInstance parse_native(const json& obj, std::size_t line) {
    McqInstance out;
    out.id = require_string(obj, "id", line);
    if (auto it = obj.find("image_ref"); it != obj.end() && it->is_string()) {
        out.image_ref = it->get<std::string>();
    }
    out.question = require_string(obj, "question", line);
    auto options_it = obj.find("options");
    if (options_it == obj.end()) {
        throw DatasetError(line, "missing field \"options\"");
    }
    out.options = read_options(*options_it, line);
    auto truth_it = obj.find("truth_index");
    if (truth_it == obj.end() || !truth_it->is_number_integer()) {
        throw DatasetError(line, "missing or non-integer field \"truth_index\"");
    }
    out.truth_index = truth_it->get<int>();
    return out;
}

/// Answers in the benchmark dumps appear as an integer index, a letter
/// ("A".."Z", sometimes "(B)" or "C."), or the verbatim option text. All
/// three are normalized to an index here.
int resolve_answer(const json& answer, const std::vector<std::string>& options,
                   std::size_t line) {
    if (answer.is_number_integer()) {
        return answer.get<int>();
    }
    if (!answer.is_string()) {
        throw DatasetError(line, "answer field is neither an integer nor a string");
    }
    const std::string raw = answer.get<std::string>();
    const std::string trimmed{trim(raw)};
    if (trimmed.empty()) {
        throw DatasetError(line, "answer field is empty");
    }

    // Exact option text wins over a single-letter interpretation so an
    // option set like {"A", "B"} still resolves correctly.
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (options[i] == trimmed) {
            return static_cast<int>(i);
        }
    }

    std::string letter = trimmed;
    if (letter.size() >= 3 && letter.front() == '(' && letter[2] == ')') {
        letter = letter.substr(1, 1);
    } else if (letter.size() == 2 && (letter[1] == '.' || letter[1] == ')')) {
        letter = letter.substr(0, 1);
    }
    if (letter.size() == 1) {
        const char c = letter[0];
        if (c >= 'A' && c <= 'Z') {
            return c - 'A';
        }
        if (c >= 'a' && c <= 'z') {
            return c - 'a';
        }
    }
    std::ostringstream msg;
    msg << "answer \"" << raw << "\" matches neither an option letter nor option text";
    throw DatasetError(line, msg.str());
}

McqInstance parse_u2bench(const json& obj, std::size_t line) {
    McqInstance out;
    const json* id = first_of(obj, {"case_id", "id"});
    if (id == nullptr) {
        throw DatasetError(line, "missing id field (expected \"case_id\" or \"id\")");
    }
    if (id->is_string()) {
        out.id = id->get<std::string>();
    } else if (id->is_number_integer()) {
        out.id = std::to_string(id->get<long long>());
    } else {
        throw DatasetError(line, "id field is neither a string nor an integer");
    }

    if (const json* image = first_of(obj, {"image", "image_path", "image_ref"})) {
        if (!image->is_string()) {
            throw DatasetError(line, "image field is not a string");
        }
        out.image_ref = image->get<std::string>();
    }

    out.question = require_string(obj, "question", line);

    const json* options = first_of(obj, {"choices", "options"});
    if (options == nullptr) {
        throw DatasetError(line, "missing options field (expected \"choices\" or \"options\")");
    }
    out.options = read_options(*options, line);

    const json* answer = first_of(obj, {"answer", "label"});
    if (answer == nullptr) {
        throw DatasetError(line, "missing answer field (expected \"answer\" or \"label\")");
    }
    out.truth_index = resolve_answer(*answer, out.options, line);
    return out;
}

}  // namespace

DatasetFormat parse_dataset_format(std::string_view name) {
    if (name == "native-jsonl") {
        return DatasetFormat::native_jsonl;
    }
    if (name == "u2bench-mcq") {
        return DatasetFormat::u2bench_mcq;
    }
    std::ostringstream msg;
    msg << "unknown dataset format \"" << name
        << "\" (expected \"native-jsonl\" or \"u2bench-mcq\")";
    throw ConfigError(msg.str());
}

std::string_view dataset_format_name(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::native_jsonl:
            return "native-jsonl";
        case DatasetFormat::u2bench_mcq:
            return "u2bench-mcq";
    }
    return "unknown";
}

std::vector<McqInstance> load_dataset(std::istream& in, DatasetFormat format,
                                      const std::string& source_name) {
    std::vector<McqInstance> instances;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) {
            continue;
        }
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            std::ostringstream msg;
            msg << "invalid JSON: " << e.what();
            throw DatasetError(line_number, msg.str());
        }
        if (!obj.is_object()) {
            throw DatasetError(line_number, "line is valid JSON but not an object");
        }
        McqInstance instance = format == DatasetFormat::native_jsonl
                                   ? parse_native(obj, line_number)
                                   : parse_u2bench(obj, line_number);
        try {
            validate_instance(instance);
        } catch (const Error& e) {
            throw DatasetError(line_number, e.what());
        }
        if (!ids.insert(instance.id).second) {
            std::ostringstream msg;
            msg << "duplicate instance id \"" << instance.id << "\"";
            throw DatasetError(line_number, msg.str());
        }
        instances.push_back(std::move(instance));
    }
    if (in.bad()) {
        throw Error("I/O error while reading dataset " + source_name);
    }
    return instances;
}

std::vector<McqInstance> load_dataset(const std::string& path, DatasetFormat format) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open dataset file " + path);
    }
    return load_dataset(in, format, path);
}

}  // namespace editflip
