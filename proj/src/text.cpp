#include "coffee/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

#include "coffee/error.hpp"

namespace coffee {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_request: return "invalid_request";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::upstream_model_error: return "upstream_model_error";
    case ErrorCode::sandbox_error: return "sandbox_error";
    case ErrorCode::capacity: return "capacity";
  }
  return "invalid_request";
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_request: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::upstream_model_error: return 502;
    case ErrorCode::sandbox_error: return 500;
    case ErrorCode::capacity: return 413;
  }
  return 500;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

std::string_view rtrim(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string_view trim(std::string_view s) {
  s = rtrim(s);
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  return s;
}

std::string LineNormalization::id() const {
  if (mode == Mode::exact) return "exact";
  return "whitespace(" + comment_prefix + ")";
}

std::vector<std::string> normalize_lines(std::string_view text,
                                         const LineNormalization& policy) {
  std::vector<std::string> out;
  for (std::string_view line : split_lines(text)) {
    if (policy.mode == LineNormalization::Mode::exact) {
      out.emplace_back(line);
      continue;
    }
    std::string_view t = trim(line);
    if (t.empty()) continue;
    if (!policy.comment_prefix.empty() && t.starts_with(policy.comment_prefix))
      continue;
    out.emplace_back(t);
  }
  return out;
}

std::string canonical_code(std::string_view code,
                           const LineNormalization& policy) {
  if (policy.mode == LineNormalization::Mode::exact) return std::string(code);
  std::string joined;
  for (const auto& line : normalize_lines(code, policy)) {
    joined += line;
    joined += '\n';
  }
  return joined;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

}  // namespace coffee
