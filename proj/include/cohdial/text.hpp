#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cohdial {

using Tokens = std::vector<std::string>;

// Lowercases ASCII, splits on whitespace and peels leading/trailing
// punctuation characters off each word as separate tokens. Interior
// punctuation ("don't", "u.s.") stays attached.
Tokens tokenize(std::string_view text);

std::string join(const Tokens &tokens, std::string_view sep = " ");

std::string to_lower(std::string_view text);

// Splits on every occurrence of `sep`; empty pieces are kept.
std::vector<std::string> split(std::string_view text, std::string_view sep);

std::string_view trim(std::string_view text);

} // namespace cohdial
