#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace paracap {

/// Ordered lowercase tokens; no token contains whitespace or punctuation.
using TokenList = std::vector<std::string>;

/// Lowercases, maps every character outside [a-z0-9] to a space and splits on
/// whitespace. Empty input gives an empty list.
TokenList tokenize(std::string_view text);

/// Splits raw paragraph text on '.', '!' and '?', trimming each segment and
/// dropping empty ones.
std::vector<std::string> split_sentences(std::string_view text);

/// Tokens of every sentence, concatenated in order.
TokenList tokenize_paragraph(const std::vector<std::string>& sentences);

std::string join(const TokenList& tokens, std::string_view sep = " ");

}  // namespace paracap
