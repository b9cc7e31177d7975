#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace editflip {

/// A single "(previous , new)" word/phrase replacement, the atomic move of
/// the attack search. `next` may be empty (a deletion) but must differ from
/// `prev`. Serialization (JSON) escapes all separator characters, so the
/// strings themselves are unconstrained beyond the validity rule.
struct EditPair {
    std::string prev;
    std::string next;

    friend bool operator==(const EditPair&, const EditPair&) = default;
};

/// prev non-empty and prev != next, under exact string equality.
bool is_valid_edit_pair(const EditPair& edit);

/// Insertion-ordered set of edits proposed so far within one attack.
/// Duplicate (prev, next) pairs are rejected on insert.
class EditHistory {
public:
    /// Returns false (and leaves the history unchanged) for duplicates.
    bool insert(const EditPair& edit);

    bool contains(const EditPair& edit) const;

    const std::vector<EditPair>& pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

private:
    std::vector<EditPair> pairs_;
    std::unordered_set<std::string> keys_;
};

enum class EditApplyStatus {
    applied,
    prev_not_found,  // edit.prev is not a substring of the question
    empty_result,    // applying the edit would leave an empty question
};

struct EditApplication {
    EditApplyStatus status = EditApplyStatus::prev_not_found;
    std::string text;  // valid only when status == applied

    bool ok() const { return status == EditApplyStatus::applied; }
};

/// Replaces the first case-sensitive occurrence of edit.prev with edit.next.
/// Everything outside the replaced span is byte-identical to the input.
/// Never throws: inapplicable edits are reported through the status so the
/// caller can log and discard them.
EditApplication apply_edit(std::string_view question, const EditPair& edit);

/// Applies `path` in order, starting from `root_question`. Used to verify
/// recorded attacks independently of the live search tree.
/// Throws ReplayError naming the failing step if any edit is inapplicable.
std::string edit_path_replay(std::string_view root_question, std::span<const EditPair> path);

}  // namespace editflip
