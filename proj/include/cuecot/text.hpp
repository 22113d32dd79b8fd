#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cuecot::text {

/// Decodes UTF-8 into Unicode scalar values. Invalid bytes decode to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);

/// Number of Unicode scalar values in s.
std::size_t scalar_count(std::string_view s);

std::string trim(std::string_view s);
bool is_blank(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

bool is_cjk(char32_t cp);

/// Whitespace tokens, with every CJK scalar split out as its own token.
/// Pure English text yields whitespace tokens; unspaced Chinese yields one
/// token per character.
std::vector<std::string> tokenize(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace cuecot::text
