#include <string_view>
#include <vector>

#include "coffee/sandbox.hpp"
#include "coffee/text.hpp"

namespace coffee {
namespace {

std::vector<std::string_view> significant_lines(std::string_view text) {
  std::vector<std::string_view> lines = split_lines(text);
  for (auto& line : lines) line = rtrim(line);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view text) : text_(text) {}

  bool next(std::string_view& token) {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) return false;
    std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    token = text_.substr(start, pos_ - start);
    return true;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(ComparePolicy policy) {
  switch (policy) {
    case ComparePolicy::exact: return "exact";
    case ComparePolicy::trailing_ws: return "trailing_ws";
    case ComparePolicy::token: return "token";
  }
  return "trailing_ws";
}

std::optional<ComparePolicy> parse_compare_policy(std::string_view name) {
  if (name == "exact") return ComparePolicy::exact;
  if (name == "trailing_ws") return ComparePolicy::trailing_ws;
  if (name == "token") return ComparePolicy::token;
  return std::nullopt;
}

bool compare_output(std::string_view actual, std::string_view expected,
                    ComparePolicy policy) {
  switch (policy) {
    case ComparePolicy::exact:
      return actual == expected;
    case ComparePolicy::trailing_ws:
      return significant_lines(actual) == significant_lines(expected);
    case ComparePolicy::token: {
      Tokenizer a(actual), e(expected);
      std::string_view ta, te;
      while (true) {
        bool ha = a.next(ta);
        bool he = e.next(te);
        if (ha != he) return false;
        if (!ha) return true;
        if (ta != te) return false;
      }
    }
  }
  return false;
}

}  // namespace coffee
