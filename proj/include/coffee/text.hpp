#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace coffee {

// Splits on '\n'. A trailing newline does not produce an empty final line,
// so "a\nb\n" and "a\nb" both yield {"a", "b"}; "" yields {}.
std::vector<std::string_view> split_lines(std::string_view text);

std::string_view trim(std::string_view s);
std::string_view rtrim(std::string_view s);
bool is_space(char c);

// Line normalization shared by dedup and overlap analysis.
struct LineNormalization {
  enum class Mode { exact, whitespace };
  Mode mode = Mode::whitespace;
  // Lines whose trimmed form starts with this prefix are dropped in
  // whitespace mode. Empty disables comment stripping.
  std::string comment_prefix = "#";

  // Stable identifier, e.g. "whitespace(#)" or "exact".
  std::string id() const;
};

std::vector<std::string> normalize_lines(std::string_view text,
                                         const LineNormalization& policy);

// Canonical form used to decide whether two programs are "identical".
// exact: the bytes themselves; whitespace: normalized lines joined by '\n'.
std::string canonical_code(std::string_view code,
                           const LineNormalization& policy);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace coffee
