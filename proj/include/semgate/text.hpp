#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace semgate::text {

/// Rough token count: every maximal run of word characters counts once, every other
/// non-space character counts once. Non-ASCII bytes are treated as word characters.
/// Only relative comparisons are meaningful; this is not a model tokenizer.
std::size_t token_estimate(std::string_view s);

/// Lowercased alphanumeric words, in order of appearance.
std::vector<std::string> words(std::string_view s);

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string_view trim(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

/// Byte offset of the first case-insensitive (ASCII) occurrence of `needle` at or after `from`.
std::size_t ifind(std::string_view haystack, std::string_view needle, std::size_t from = 0);

/// Largest offset <= pos that does not fall inside a UTF-8 multibyte sequence.
std::size_t utf8_floor(std::string_view s, std::size_t pos);

}  // namespace semgate::text
