#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace motor {

/// Lowercases, turns punctuation into word boundaries and splits on
/// whitespace. With keep_semicolon, ';' survives as a standalone word.
std::vector<std::string> normalize_words(std::string_view text, bool keep_semicolon = false);

std::string join_words(const std::vector<std::string>& words, std::string_view sep = " ");

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

/// Reads a whole file; throws std::runtime_error when it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace motor
