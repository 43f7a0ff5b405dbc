#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/error.hpp"
#include "sugkit/utf8.hpp"

namespace sugkit {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Reserved token layout. Ids are fixed so checkpoints from different corpora
// agree on the marker positions.
namespace reserved {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kEndOfSuggestion = 2;
inline constexpr TokenId kPrefix = 3;
inline constexpr TokenId kCandidates = 4;
inline constexpr TokenId kHotWords = 5;
inline constexpr TokenId kHistory = 6;
inline constexpr TokenId kProfile = 7;
inline constexpr TokenId kSeparator = 8;
inline constexpr TokenId kCount = 9;

inline constexpr std::string_view kNames[kCount] = {
    "<PAD>", "<UNK>", "<EOSUG>", "<P>", "<C>", "<H>", "<B>", "<U>", "<SEP>"};
}  // namespace reserved

/// Character-level vocabulary: the reserved markers followed by one token per
/// UTF-8 code point observed in the corpus it was built from.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// `symbols` are the non-reserved tokens, in id order.
  explicit Vocabulary(const std::vector<std::string>& symbols) {
    for (auto name : reserved::kNames) add(std::string(name));
    for (const auto& s : symbols) {
      if (s.empty()) throw InputError("vocabulary symbol must be non-empty");
      if (index_.contains(s)) throw InputError("duplicate vocabulary symbol: " + s);
      add(s);
    }
  }

  /// Builds a vocabulary from every code point found in `texts`, sorted by
  /// byte order so the result does not depend on corpus order.
  static Vocabulary from_corpus(std::span<const std::string> texts) {
    std::set<std::string> pieces;
    for (const auto& t : texts) {
      for (auto& p : utf8::split(t)) pieces.insert(std::move(p));
    }
    std::vector<std::string> symbols;
    for (const auto& p : pieces) {
      bool clash = false;
      for (auto name : reserved::kNames) clash = clash || (p == name);
      if (!clash) symbols.push_back(p);
    }
    return Vocabulary(symbols);
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const {
    check(id);
    return tokens_[static_cast<std::size_t>(id)];
  }

  static bool is_reserved(TokenId id) { return id >= 0 && id < reserved::kCount; }
  static bool is_stop(TokenId id) { return id == reserved::kEndOfSuggestion; }
  static std::vector<TokenId> stop_ids() { return {reserved::kEndOfSuggestion}; }

  bool contains(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }
  void check(TokenId id) const {
    if (!contains(id)) {
      throw InputError("token id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(tokens_.size()) + ")");
    }
  }

  /// Looks up one symbol; returns UNK for unknown pieces and for text that
  /// spells a reserved marker.
  TokenId lookup(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    if (it == index_.end() || is_reserved(it->second)) return reserved::kUnk;
    return it->second;
  }

  /// Encodes text one code point per token. `unknown` (optional) is incremented
  /// for every code point mapped to UNK.
  TokenSequence encode(std::string_view text, std::size_t* unknown = nullptr) const {
    TokenSequence out;
    for (const auto& piece : utf8::split(text)) {
      const TokenId id = lookup(piece);
      if (id == reserved::kUnk && unknown != nullptr) ++*unknown;
      out.push_back(id);
    }
    return out;
  }

  /// Concatenates token surfaces; reserved tokens are rendered by name.
  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) out += token(id);
    return out;
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  nlohmann::json to_json() const { return tokens_; }

  static Vocabulary from_json(const nlohmann::json& j) {
    auto all = j.get<std::vector<std::string>>();
    if (all.size() < static_cast<std::size_t>(reserved::kCount)) {
      throw InputError("vocabulary is missing reserved tokens");
    }
    for (TokenId i = 0; i < reserved::kCount; ++i) {
      if (all[static_cast<std::size_t>(i)] != reserved::kNames[i]) {
        throw InputError("vocabulary reserved token mismatch at id " + std::to_string(i));
      }
    }
    return Vocabulary(std::vector<std::string>(all.begin() + reserved::kCount, all.end()));
  }

 private:
  void add(std::string s) {
    index_.emplace(s, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(s));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace sugkit
