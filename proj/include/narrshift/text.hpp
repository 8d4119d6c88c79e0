#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace narrshift {

// Lowercased word tokens: runs of letters, digits and inner apostrophes.
// Punctuation and whitespace are dropped. U+2019 is folded to '\''.
// Shared by chunk token counts, the KL metric and the Prop.-1 accounting.
std::vector<std::string> tokenize(std::string_view text);

std::size_t count_tokens(std::string_view text);

// Decodes one UTF-8 code point starting at `pos` and advances `pos`.
// Malformed bytes decode as U+FFFD and consume a single byte.
char32_t decode_utf8(std::string_view text, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);

bool is_word_codepoint(char32_t cp);
char32_t to_lower_codepoint(char32_t cp);
bool is_upper_codepoint(char32_t cp);
bool is_space_codepoint(char32_t cp);

std::string_view trim(std::string_view text);
bool is_blank(std::string_view text);

std::string sha256_hex(std::string_view data);

// "0.2", "1.0": the canonical rendering of a grid level.
std::string format_level(double level);

// Fixed-precision rendering used by CSV output.
std::string format_fixed(double value, int precision);

}  // namespace narrshift
