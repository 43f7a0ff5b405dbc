#pragma once

#include <string>
#include <string_view>

#include "sugkit/utf8.hpp"

namespace sugkit {

// Punctuation removed by normalize_query(): the ASCII punctuation block plus
// the common CJK / full-width / general punctuation ranges below.
inline bool is_punctuation(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  struct Range {
    char32_t lo, hi;
  };
  static constexpr Range kRanges[] = {
      {0x00A1, 0x00A1}, {0x00AB, 0x00AB}, {0x00B7, 0x00B7}, {0x00BB, 0x00BB},
      {0x00BF, 0x00BF}, {0x2010, 0x2027}, {0x2030, 0x205E}, {0x3001, 0x3003},
      {0x3008, 0x3011}, {0x3014, 0x301F}, {0x30FB, 0x30FB}, {0xFE30, 0xFE4F},
      {0xFF01, 0xFF0F}, {0xFF1A, 0xFF20}, {0xFF3B, 0xFF40}, {0xFF5B, 0xFF65},
  };
  for (const auto& r : kRanges) {
    if (c >= r.lo && c <= r.hi) return true;
  }
  return false;
}

inline bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' ||
         c == 0x00A0 || c == 0x3000;
}

/// Lowercases ASCII letters, drops punctuation, trims and collapses
/// whitespace runs to a single space.
inline std::string normalize_query(std::string_view q) {
  std::string out;
  bool pending_space = false;
  for (const auto& piece : utf8::split(q)) {
    const char32_t c = utf8::code_point(piece);
    if (is_punctuation(c)) continue;
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    if (c >= 'A' && c <= 'Z') {
      out += static_cast<char>(c - 'A' + 'a');
    } else {
      out += piece;
    }
  }
  return out;
}

}  // namespace sugkit
