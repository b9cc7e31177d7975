#include "editflip/mcq.hpp"

#include <sstream>
#include <unordered_set>

#include "editflip/errors.hpp"

namespace editflip {

void validate_instance(const McqInstance& instance) {
    auto fail = [&](const std::string& why) {
        std::ostringstream msg;
        msg << "instance \"" << instance.id << "\": " << why;
        throw Error(msg.str());
    };
    if (instance.id.empty()) {
        throw Error("instance has an empty id");
    }
    if (instance.question.empty()) {
        fail("question is empty");
    }
    if (instance.options.size() < 2) {
        fail("needs at least two options");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < instance.options.size(); ++i) {
        if (instance.options[i].empty()) {
            std::ostringstream why;
            why << "option " << i << " is empty";
            fail(why.str());
        }
        if (!seen.insert(instance.options[i]).second) {
            std::ostringstream why;
            why << "option " << i << " duplicates an earlier option";
            fail(why.str());
        }
    }
    if (instance.truth_index < 0 ||
        instance.truth_index >= static_cast<int>(instance.options.size())) {
        std::ostringstream why;
        why << "truth_index " << instance.truth_index << " is out of range for "
            << instance.options.size() << " options";
        fail(why.str());
    }
}

}  // namespace editflip
