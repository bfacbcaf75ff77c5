#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

namespace semgate {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// SHA-256 over length-prefixed parts, so ("ab", "c") and ("a", "bc") differ.
std::string content_key(std::initializer_list<std::string_view> parts);

}  // namespace semgate
