// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cotforget {

std::string trim(std::string_view s);

/// Collapses every whitespace run to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);

/// Tokens used by every lexical metric: lowercased, ASCII punctuation
/// replaced by blanks, split on whitespace. Non-ASCII bytes are kept.
std::vector<std::string> metric_tokens(std::string_view s);

/// Case- and whitespace-insensitive substring test.
bool contains_normalized(std::string_view haystack, std::string_view needle);

std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);

/// Writes to `path.tmp` then renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::string_view content);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace cotforget
