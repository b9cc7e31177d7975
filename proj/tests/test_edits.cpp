#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "editflip/edits.hpp"
#include "editflip/errors.hpp"

using namespace editflip;

namespace {

std::string random_text(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
    static const char alphabet[] = "aabbc ";
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, sizeof(alphabet) - 2);
    std::string out;
    std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
        out += alphabet[pick(rng)];
    }
    return out;
}

}  // namespace

TEST_CASE("valid edit pairs need a non-empty prev that differs from next") {
    CHECK(is_valid_edit_pair({"a", "b"}));
    CHECK(is_valid_edit_pair({"a", ""}));
    CHECK_FALSE(is_valid_edit_pair({"", "b"}));
    CHECK_FALSE(is_valid_edit_pair({"", ""}));
    CHECK_FALSE(is_valid_edit_pair({"same", "same"}));
}

TEST_CASE("apply_edit replaces the first occurrence only") {
    EditApplication result = apply_edit("a a", {"a", "b"});
    REQUIRE(result.ok());
    CHECK(result.text == "b a");

    result = apply_edit("Is the lesion benign?", {"lesion", "mass"});
    REQUIRE(result.ok());
    CHECK(result.text == "Is the mass benign?");

    result = apply_edit("the lesion near the lesion", {"lesion", "nodule"});
    REQUIRE(result.ok());
    CHECK(result.text == "the nodule near the lesion");
}

TEST_CASE("apply_edit reports a missing prev without modifying anything") {
    EditApplication result = apply_edit("hello world", {"absent", "x"});
    CHECK(result.status == EditApplyStatus::prev_not_found);
    CHECK_FALSE(result.ok());
}

TEST_CASE("apply_edit rejects an edit that would empty the question") {
    EditApplication result = apply_edit("abc", {"abc", ""});
    CHECK(result.status == EditApplyStatus::empty_result);
    CHECK_FALSE(result.ok());

    result = apply_edit("abc def", {"abc ", ""});
    REQUIRE(result.ok());
    CHECK(result.text == "def");
}

TEST_CASE("apply_edit treats an empty prev as not found") {
    CHECK(apply_edit("abc", {"", "x"}).status == EditApplyStatus::prev_not_found);
}

TEST_CASE("edit_path_replay composes edits in order") {
    std::vector<EditPair> twice{{"a", "b"}, {"a", "c"}};
    CHECK(edit_path_replay("a a", twice) == "b c");

    std::vector<EditPair> independent{{"a", "x"}, {"c", "y"}};
    CHECK(edit_path_replay("a b c", independent) == "x b y");

    CHECK(edit_path_replay("anything", {}) == "anything");
}

TEST_CASE("property: replay over a concatenated path splits anywhere") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        std::string text = random_text(rng, 6, 20);
        std::vector<EditPair> path;
        std::string current = text;
        for (int step = 0; step < 4; ++step) {
            EditPair edit{random_text(rng, 1, 2), random_text(rng, 1, 2)};
            EditApplication applied = apply_edit(current, edit);
            if (applied.ok() && edit.prev != edit.next) {
                path.push_back(edit);
                current = applied.text;
            }
        }
        for (std::size_t split = 0; split <= path.size(); ++split) {
            std::vector<EditPair> head(path.begin(), path.begin() + split);
            std::vector<EditPair> tail(path.begin() + split, path.end());
            CHECK(edit_path_replay(edit_path_replay(text, head), tail) ==
                  edit_path_replay(text, path));
        }
    }
}

TEST_CASE("edit_path_replay reports the failing step") {
    const std::vector<EditPair> path = {{"a", "x"}, {"zz", "y"}};
    CHECK_THROWS_AS(edit_path_replay("a b", path), ReplayError);
    try {
        edit_path_replay("a b", path);
    } catch (const ReplayError& e) {
        CHECK(e.step() == 1);
    }
}

TEST_CASE("history dedups structurally, not by concatenation") {
    EditHistory history;
    CHECK(history.insert({"a", "b"}));
    CHECK_FALSE(history.insert({"a", "b"}));
    CHECK(history.insert({"a", "c"}));
    CHECK(history.contains({"a", "b"}));
    CHECK_FALSE(history.contains({"b", "a"}));
    CHECK(history.pairs().size() == 2);

    // Pairs whose concatenations coincide must stay distinct.
    EditHistory tricky;
    CHECK(tricky.insert({"ab", "c"}));
    CHECK(tricky.insert({"a", "bc"}));
    CHECK(tricky.pairs().size() == 2);
}

TEST_CASE("property: first-occurrence semantics on generated cases") {
    std::mt19937_64 rng(20260816);
    int applied_count = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string text = random_text(rng, 1, 24);
        EditPair edit{random_text(rng, 1, 4), random_text(rng, 0, 4)};
        EditApplication result = apply_edit(text, edit);

        std::size_t at = text.find(edit.prev);
        if (at == std::string::npos) {
            CHECK(result.status == EditApplyStatus::prev_not_found);
            continue;
        }
        std::string expected =
            text.substr(0, at) + edit.next + text.substr(at + edit.prev.size());
        if (expected.empty()) {
            CHECK(result.status == EditApplyStatus::empty_result);
            continue;
        }
        REQUIRE(result.ok());
        applied_count += 1;
        CHECK(result.text == expected);
        // Bytes before the match and after its end survive untouched.
        CHECK(result.text.substr(0, at) == text.substr(0, at));
        CHECK(result.text.substr(at + edit.next.size()) == text.substr(at + edit.prev.size()));
    }
    CHECK(applied_count > 1000);
}

TEST_CASE("property: replay equals manual fold") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 2000; ++i) {
        std::string text = random_text(rng, 4, 20);
        std::vector<EditPair> path;
        std::string manual = text;
        bool all_ok = true;
        for (int step = 0; step < 3; ++step) {
            EditPair edit{random_text(rng, 1, 3), random_text(rng, 0, 3)};
            path.push_back(edit);
            if (!all_ok) {
                continue;
            }
            EditApplication applied = apply_edit(manual, edit);
            if (applied.ok()) {
                manual = applied.text;
            } else {
                all_ok = false;
            }
        }
        if (all_ok) {
            CHECK(edit_path_replay(text, path) == manual);
        } else {
            CHECK_THROWS_AS(edit_path_replay(text, path), ReplayError);
        }
    }
}
