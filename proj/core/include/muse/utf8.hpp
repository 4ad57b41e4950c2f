#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace muse::utf8 {

/// Splits text into code points, each returned as its UTF-8 byte string.
/// Invalid bytes are passed through as single-byte "characters".
std::vector<std::string> characters(std::string_view text);

/// Decodes the code point starting at `pos`; advances `pos` past it.
char32_t decode(std::string_view text, std::size_t& pos);

std::string encode(char32_t cp);

bool is_space(char32_t cp);

/// Splits on Unicode whitespace, dropping empty fields.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace muse::utf8
