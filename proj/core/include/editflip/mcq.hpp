#pragma once

#include <string>
#include <vector>

namespace editflip {

/// One multiple-choice visual QA instance. `image_ref` is an opaque handle
/// (URL, path, or dataset key) passed through to the scoring backend; the
/// attack itself only ever rewrites `question`.
struct McqInstance {
    std::string id;
    std::string image_ref;
    std::string question;
    std::vector<std::string> options;
    int truth_index = -1;
};

/// Throws Error unless: id and question are non-empty, there are at least
/// two options, every option is non-empty, options are pairwise distinct,
/// and truth_index addresses one of them.
void validate_instance(const McqInstance& instance);

}  // namespace editflip
