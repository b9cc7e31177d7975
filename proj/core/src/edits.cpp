#include "editflip/edits.hpp"

#include <sstream>

#include "editflip/errors.hpp"

namespace editflip {

namespace {

// \x1F (unit separator) cannot collide with content of either field the way
// a printable delimiter could, because it never appears in well-formed UTF-8
// text produced by the generators; even if it did, prev and next are each
// length-prefixed here so the key stays injective.
std::string history_key(const EditPair& edit) {
    std::ostringstream key;
    key << edit.prev.size() << '\x1F' << edit.prev << '\x1F' << edit.next;
    return key.str();
}

}  // namespace

bool is_valid_edit_pair(const EditPair& edit) {
    return !edit.prev.empty() && edit.prev != edit.next;
}

bool EditHistory::insert(const EditPair& edit) {
    auto [it, inserted] = keys_.insert(history_key(edit));
    if (inserted) {
        pairs_.push_back(edit);
    }
    return inserted;
}

bool EditHistory::contains(const EditPair& edit) const {
    return keys_.count(history_key(edit)) > 0;
}

EditApplication apply_edit(std::string_view question, const EditPair& edit) {
    EditApplication out;
    if (edit.prev.empty()) {
        out.status = EditApplyStatus::prev_not_found;
        return out;
    }
    const std::size_t pos = question.find(edit.prev);
    if (pos == std::string_view::npos) {
        out.status = EditApplyStatus::prev_not_found;
        return out;
    }
    std::string result;
    result.reserve(question.size() - edit.prev.size() + edit.next.size());
    result.append(question.substr(0, pos));
    result.append(edit.next);
    result.append(question.substr(pos + edit.prev.size()));
    if (result.empty()) {
        out.status = EditApplyStatus::empty_result;
        return out;
    }
    out.status = EditApplyStatus::applied;
    out.text = std::move(result);
    return out;
}

std::string edit_path_replay(std::string_view root_question, std::span<const EditPair> path) {
    std::string current(root_question);
    for (std::size_t i = 0; i < path.size(); ++i) {
        EditApplication step = apply_edit(current, path[i]);
        if (!step.ok()) {
            std::ostringstream msg;
            msg << "edit (\"" << path[i].prev << "\" -> \"" << path[i].next << "\") ";
            msg << (step.status == EditApplyStatus::prev_not_found
                        ? "does not match the question text"
                        : "would produce an empty question");
            throw ReplayError(i, msg.str());
        }
        current = std::move(step.text);
    }
    return current;
}

}  // namespace editflip
