#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers and the surface segmentation shared by the tokenizer, the
// corpus statistics, and the metrics.
namespace semdial::text {

// Decodes the code point starting at `pos` and advances `pos`. Invalid bytes
// decode as U+FFFD and advance by one.
char32_t next_code_point(std::string_view s, std::size_t& pos);

void append_utf8(std::string& out, char32_t cp);

// CJK ideographs, kana, hangul, and CJK / full-width punctuation. Each such
// code point is a token of its own.
bool is_cjk(char32_t cp);

bool is_space(char32_t cp);

// ASCII punctuation split off from words and attached to the preceding token
// on detokenization.
bool is_split_punct(char32_t cp);

// Splits text into surface tokens: whitespace separates tokens, every CJK code
// point is a token, and the ASCII marks `.,!?;:` are tokens of their own.
std::vector<std::string> segment(std::string_view s);

// Inverse of segment() on canonical text: tokens are joined with one space,
// except that no space is placed next to a CJK token or before split
// punctuation.
std::string join(std::span<const std::string> tokens);

// join(segment(s)).
std::string normalize(std::string_view s);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ULL);

std::string hex64(std::uint64_t v);

}  // namespace semdial::text
