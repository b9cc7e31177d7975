#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "editflip/mcq.hpp"
#include "editflip/mocks.hpp"

namespace editflip::testing {

inline McqInstance make_instance(std::string id, std::string question,
                                 std::vector<std::string> options = {"yes", "no"},
                                 int truth_index = 0, std::string image_ref = "img.png") {
    McqInstance instance;
    instance.id = std::move(id);
    instance.image_ref = std::move(image_ref);
    instance.question = std::move(question);
    instance.options = std::move(options);
    instance.truth_index = truth_index;
    return instance;
}

/// Two-option world with a fixed pre-attack margin for option `truth` = 0:
/// base_scores = {margin, 0}. Keyword rules shift option 1 upward.
inline MockScorerConfig margin_world(double margin, std::vector<MockScoreRule> rules = {}) {
    MockScorerConfig config;
    config.options = {"yes", "no"};
    config.base_scores = {margin, 0.0};
    config.rules = std::move(rules);
    return config;
}

/// Unique scratch directory under the system temp dir; removed on
/// destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

}  // namespace editflip::testing
