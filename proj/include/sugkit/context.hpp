#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/candidate_miner.hpp"
#include "sugkit/error.hpp"
#include "sugkit/vocabulary.hpp"

namespace sugkit {

inline constexpr std::size_t kDefaultCandidateSlots = 10;  // m
inline constexpr std::size_t kDefaultHotWordCap = 10;      // n
inline constexpr std::size_t kDefaultHistoryCap = 10;

/// Model input: prefix, mined candidates, hot words, behavior history (most
/// recent last) and user profile tags, in that order.
struct SuggestionContext {
  std::string prefix;
  std::vector<std::string> candidates;
  std::vector<std::string> hot_words;
  std::vector<std::string> behavior_history;
  std::vector<std::string> user_profile;
  std::string city;

  bool operator==(const SuggestionContext&) const = default;
};

namespace detail {
inline std::vector<std::string> non_empty(std::span<const std::string> items, std::size_t cap) {
  std::vector<std::string> out;
  for (const auto& s : items) {
    if (out.size() >= cap) break;
    if (!s.empty()) out.push_back(s);
  }
  return out;
}
}  // namespace detail

/// Candidates come from `lookup(index, prefix, city, m)`; hot words are cut to
/// the first `n`, history to the most recent `history_cap`. Empty strings are
/// dropped from the caller lists since they cannot be told apart once
/// serialized.
inline SuggestionContext assemble(const std::string& prefix, const std::string& city,
                                  const CandidateIndex& index,
                                  std::span<const std::string> hot_words,
                                  std::span<const std::string> history,
                                  std::span<const std::string> profile,
                                  std::size_t m = kDefaultCandidateSlots,
                                  std::size_t n = kDefaultHotWordCap,
                                  std::size_t history_cap = kDefaultHistoryCap) {
  if (prefix.empty()) throw InputError("prefix must be non-empty");
  SuggestionContext ctx;
  ctx.prefix = prefix;
  ctx.city = city;
  ctx.candidates = lookup(index, prefix, city, m);
  ctx.hot_words = detail::non_empty(hot_words, n);
  auto hist = detail::non_empty(history, history.size());
  if (hist.size() > history_cap) hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(history_cap));
  ctx.behavior_history = std::move(hist);
  ctx.user_profile = detail::non_empty(profile, profile.size());
  return ctx;
}

struct SerializationReport {
  std::size_t unknown_characters = 0;
};

/// Template: <P> prefix <C> c1 <SEP> c2 ... <H> ... <B> ... <U> ...
/// Field text is encoded character by character; a character that spells a
/// marker name still maps to ordinary character tokens, so markers are never
/// forged by text.
inline TokenSequence serialize(const SuggestionContext& ctx, const Vocabulary& vocab,
                               SerializationReport* report = nullptr) {
  if (ctx.prefix.empty()) throw InputError("prefix must be non-empty");
  std::size_t unknown = 0;
  TokenSequence out;
  auto text = [&](const std::string& s) {
    auto ids = vocab.encode(s, &unknown);
    out.insert(out.end(), ids.begin(), ids.end());
  };
  auto list = [&](TokenId marker, const std::vector<std::string>& items) {
    out.push_back(marker);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].empty()) throw InputError("context list items must be non-empty");
      if (i > 0) out.push_back(reserved::kSeparator);
      text(items[i]);
    }
  };
  out.push_back(reserved::kPrefix);
  text(ctx.prefix);
  list(reserved::kCandidates, ctx.candidates);
  list(reserved::kHotWords, ctx.hot_words);
  list(reserved::kHistory, ctx.behavior_history);
  list(reserved::kProfile, ctx.user_profile);
  if (report != nullptr) report->unknown_characters += unknown;
  return out;
}

/// Inverse of serialize() for contexts whose text is fully in-vocabulary. The
/// city is not part of the token stream and comes back empty.
inline SuggestionContext parse_serialized(std::span<const TokenId> tokens,
                                          const Vocabulary& vocab) {
  static constexpr std::array<TokenId, 5> kOrder = {reserved::kPrefix, reserved::kCandidates,
                                                    reserved::kHotWords, reserved::kHistory,
                                                    reserved::kProfile};
  std::array<std::vector<std::string>, 5> fields;
  int segment = -1;
  std::string current;
  bool open = false;
  auto flush = [&] {
    if (open) fields[static_cast<std::size_t>(segment)].push_back(current);
    current.clear();
    open = false;
  };
  for (TokenId id : tokens) {
    vocab.check(id);
    if (segment + 1 < 5 && id == kOrder[static_cast<std::size_t>(segment + 1)]) {
      flush();
      ++segment;
      continue;
    }
    if (segment < 0) throw InputError("serialized context must start with <P>");
    if (id == reserved::kSeparator) {
      if (!open) throw InputError("empty item in serialized context");
      flush();
      continue;
    }
    if (Vocabulary::is_reserved(id) && id != reserved::kUnk) {
      throw InputError("unexpected marker " + vocab.token(id) + " in serialized context");
    }
    current += vocab.token(id);
    open = true;
  }
  flush();
  if (segment != 4) throw InputError("serialized context is missing segment markers");
  SuggestionContext ctx;
  ctx.prefix = fields[0].empty() ? std::string() : fields[0].front();
  ctx.candidates = std::move(fields[1]);
  ctx.hot_words = std::move(fields[2]);
  ctx.behavior_history = std::move(fields[3]);
  ctx.user_profile = std::move(fields[4]);
  return ctx;
}

inline nlohmann::json to_json(const SuggestionContext& ctx) {
  return {{"prefix", ctx.prefix},
          {"city", ctx.city},
          {"candidates", ctx.candidates},
          {"hot_words", ctx.hot_words},
          {"history", ctx.behavior_history},
          {"profile", ctx.user_profile}};
}

/// Reads the context fields of a dataset line. Missing list fields are empty;
/// `has_candidates` reports whether the line carried its own candidate list.
inline SuggestionContext context_from_json(const nlohmann::json& j,
                                           bool* has_candidates = nullptr) {
  SuggestionContext ctx;
  ctx.prefix = j.at("prefix").get<std::string>();
  ctx.city = j.value("city", std::string());
  auto list = [&](const char* key) {
    return j.contains(key) ? j.at(key).get<std::vector<std::string>>()
                           : std::vector<std::string>{};
  };
  ctx.candidates = list("candidates");
  ctx.hot_words = list("hot_words");
  ctx.behavior_history = list("history");
  ctx.user_profile = list("profile");
  if (has_candidates != nullptr) *has_candidates = j.contains("candidates");
  return ctx;
}

}  // namespace sugkit
