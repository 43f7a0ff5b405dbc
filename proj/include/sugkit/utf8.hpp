#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sugkit::utf8 {

// Splits a byte string into code-point substrings. An invalid lead or
// continuation byte becomes a one-byte piece of its own.
inline std::vector<std::string> split(std::string_view s) {
  std::vector<std::string> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead <= 0xF4) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = lead <= 0xEF ? 3 : 1;
    } else if (lead >= 0xC2) {
      len = 2;
    }
    if (len > 1) {
      if (i + len > s.size()) {
        len = 1;
      } else {
        for (std::size_t k = 1; k < len; ++k) {
          if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
            len = 1;
            break;
          }
        }
      }
    }
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

// Decodes one well-formed piece produced by split(); returns 0xFFFD otherwise.
inline char32_t code_point(std::string_view piece) {
  if (piece.empty()) return 0xFFFD;
  const auto b0 = static_cast<unsigned char>(piece[0]);
  auto cont = [&](std::size_t k) {
    return static_cast<char32_t>(static_cast<unsigned char>(piece[k]) & 0x3F);
  };
  switch (piece.size()) {
    case 1:
      return b0 < 0x80 ? static_cast<char32_t>(b0) : 0xFFFD;
    case 2:
      return (static_cast<char32_t>(b0 & 0x1F) << 6) | cont(1);
    case 3:
      return (static_cast<char32_t>(b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2);
    case 4:
      return (static_cast<char32_t>(b0 & 0x07) << 18) | (cont(1) << 12) |
             (cont(2) << 6) | cont(3);
    default:
      return 0xFFFD;
  }
}

}  // namespace sugkit::utf8
