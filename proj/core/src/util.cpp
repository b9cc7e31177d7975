#include "editflip/util.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>

namespace editflip {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double splitmix_unit(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

std::vector<char32_t> utf8_codepoints(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    while (i < text.size()) {
        unsigned char b0 = byte(i);
        char32_t cp = 0xFFFD;
        std::size_t len = 1;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0 && i + 1 < text.size() && (byte(i + 1) & 0xC0) == 0x80) {
            cp = static_cast<char32_t>((b0 & 0x1F) << 6 | (byte(i + 1) & 0x3F));
            len = 2;
            if (cp < 0x80) cp = 0xFFFD;
        } else if ((b0 & 0xF0) == 0xE0 && i + 2 < text.size() && (byte(i + 1) & 0xC0) == 0x80 &&
                   (byte(i + 2) & 0xC0) == 0x80) {
            cp = static_cast<char32_t>((b0 & 0x0F) << 12 | (byte(i + 1) & 0x3F) << 6 |
                                       (byte(i + 2) & 0x3F));
            len = 3;
            if (cp < 0x800) cp = 0xFFFD;
        } else if ((b0 & 0xF8) == 0xF0 && i + 3 < text.size() && (byte(i + 1) & 0xC0) == 0x80 &&
                   (byte(i + 2) & 0xC0) == 0x80 && (byte(i + 3) & 0xC0) == 0x80) {
            cp = static_cast<char32_t>((b0 & 0x07) << 18 | (byte(i + 1) & 0x3F) << 12 |
                                       (byte(i + 2) & 0x3F) << 6 | (byte(i + 3) & 0x3F));
            len = 4;
            if (cp < 0x10000 || cp > 0x10FFFF) cp = 0xFFFD;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

namespace {

struct Range {
    char32_t lo;
    char32_t hi;
};

// Latin-script letters. Latin-1 punctuation (×, ÷) is excluded.
constexpr std::array<Range, 8> kLatinRanges{{
    {U'A', U'Z'},
    {U'a', U'z'},
    {0x00C0, 0x00D6},
    {0x00D8, 0x00F6},
    {0x00F8, 0x024F},  // Latin-1 tail + Extended-A/B
    {0x1E00, 0x1EFF},  // Latin Extended Additional
    {0x2C60, 0x2C7F},  // Latin Extended-C
    {0xA720, 0xA7FF},  // Latin Extended-D
}};

// Letters of the major non-Latin scripts an LLM plausibly drifts into.
constexpr std::array<Range, 14> kNonLatinLetterRanges{{
    {0x0370, 0x03FF},   // Greek
    {0x0400, 0x04FF},   // Cyrillic
    {0x0530, 0x058F},   // Armenian
    {0x0590, 0x05FF},   // Hebrew
    {0x0600, 0x06FF},   // Arabic
    {0x0900, 0x097F},   // Devanagari
    {0x0E00, 0x0E7F},   // Thai
    {0x1100, 0x11FF},   // Hangul Jamo
    {0x3040, 0x309F},   // Hiragana
    {0x30A0, 0x30FF},   // Katakana
    {0x3400, 0x4DBF},   // CJK Extension A
    {0x4E00, 0x9FFF},   // CJK Unified
    {0xAC00, 0xD7AF},   // Hangul Syllables
    {0xF900, 0xFAFF},   // CJK Compatibility
}};

bool in_ranges(char32_t cp, const Range* begin, const Range* end) {
    for (const Range* r = begin; r != end; ++r) {
        if (cp >= r->lo && cp <= r->hi) return true;
    }
    return false;
}

}  // namespace

bool is_latin_letter(char32_t cp) {
    return in_ranges(cp, kLatinRanges.data(), kLatinRanges.data() + kLatinRanges.size());
}

bool is_nonlatin_letter(char32_t cp) {
    return in_ranges(cp, kNonLatinLetterRanges.data(),
                     kNonLatinLetterRanges.data() + kNonLatinLetterRanges.size());
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
    };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

}  // namespace editflip
