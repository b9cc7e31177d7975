#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace editflip {

/// FNV-1a 64-bit hash. Used for mock seeding and for fingerprinting the
/// edit prompt template; not for anything security sensitive.
std::uint64_t fnv1a64(std::string_view data);

/// splitmix64 step; a cheap, well-mixed PRNG for deriving mock values.
std::uint64_t splitmix64(std::uint64_t& state);

/// Uniform double in [0, 1) from one splitmix64 step.
double splitmix_unit(std::uint64_t& state);

std::string to_hex(std::uint64_t value);

/// Decodes UTF-8 into codepoints. Invalid bytes decode as U+FFFD so the
/// function is total over arbitrary input.
std::vector<char32_t> utf8_codepoints(std::string_view text);

/// Letter classification over a small table of major Unicode script ranges.
/// Good enough to separate Latin from CJK/Cyrillic/Greek/Arabic/etc. text;
/// digits, punctuation and symbols are neither.
bool is_latin_letter(char32_t cp);
bool is_nonlatin_letter(char32_t cp);

std::string_view trim(std::string_view s);

/// Current wall-clock time as an ISO-8601 UTC string.
std::string iso8601_utc_now();

}  // namespace editflip
