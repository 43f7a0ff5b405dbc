#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/error.hpp"
#include "sugkit/scorer.hpp"
#include "sugkit/vocabulary.hpp"

namespace sugkit {

/// A generated continuation (context excluded) and its cumulative
/// log-probability S(y).
struct Hypothesis {
  TokenSequence tokens;
  double score = 0.0;
  bool finished = false;

  bool operator==(const Hypothesis&) const = default;
};

/// Strict total order used for every ranking in the decoders: higher score,
/// then shorter sequence, then lexicographically smaller token ids.
inline bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

/// Keeps the best `k` entries of `pool` in rank order.
inline void keep_top(std::vector<Hypothesis>& pool, std::size_t k) {
  if (pool.size() > k) {
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(),
                      ranks_before);
    pool.resize(k);
  } else {
    std::sort(pool.begin(), pool.end(), ranks_before);
  }
}

struct QabsParams {
  std::size_t K = 12;         // result count
  std::size_t T = 15;         // max generated tokens
  double tau = -15.0;         // absolute log-prob threshold
  double alpha = 1.8;         // saturation coefficient
  double R_min = 4.0;         // results required before the fail-safe exit
  std::size_t K_search = 12;  // active beams and per-beam fan-out
  std::size_t K_win = 15;     // quality window size

  void validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (T < 1) throw ConfigError("T must be >= 1");
    if (K_search < 1) throw ConfigError("K_search must be >= 1");
    if (K_win < 1) throw ConfigError("K_win must be >= 1");
    if (std::isnan(tau) || std::isnan(alpha) || std::isnan(R_min)) {
      throw ConfigError("QA-BS thresholds must not be NaN");
    }
    if (!(alpha * static_cast<double>(K) >= 1.0)) throw ConfigError("alpha * K must be >= 1");
  }

  /// Gates switched off: behaves as plain beam search of width K with
  /// per-beam fan-out K.
  static QabsParams ungated(std::size_t k, std::size_t t) {
    QabsParams p;
    p.K = k;
    p.T = t;
    p.K_search = k;
    p.K_win = k * k + 1;
    p.tau = kNegInf;
    p.alpha = kPosInf;
    p.R_min = kPosInf;
    return p;
  }
};

enum class ExitReason { kSaturation, kFailSafe, kBudget, kBeamsExhausted };

inline std::string_view to_string(ExitReason r) {
  switch (r) {
    case ExitReason::kSaturation: return "saturation";
    case ExitReason::kFailSafe: return "fail_safe";
    case ExitReason::kBudget: return "budget";
    case ExitReason::kBeamsExhausted: return "beams_exhausted";
  }
  return "unknown";
}

struct DecodeStats {
  std::size_t steps = 0;
  std::size_t model_calls = 0;
  ExitReason exit_reason = ExitReason::kBudget;
  std::size_t result_count = 0;
  std::size_t unfinished_in_output = 0;

  bool operator==(const DecodeStats&) const = default;

  nlohmann::json to_json() const {
    return {{"steps", steps},
            {"model_calls", model_calls},
            {"exit_reason", std::string(to_string(exit_reason))},
            {"result_count", result_count},
            {"unfinished", unfinished_in_output}};
  }
};

struct SuggestionEntry {
  std::string query;
  double score = 0.0;
  TokenSequence tokens;  // generated tokens, stop included when finished
  bool finished = true;

  bool operator==(const SuggestionEntry&) const = default;
};

/// Ranked queries, best first.
struct SuggestionList {
  std::vector<SuggestionEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool operator==(const SuggestionList&) const = default;
};

struct DecodeResult {
  std::vector<Hypothesis> hypotheses;  // Top-K(C u B), rank order
  SuggestionList suggestions;
  DecodeStats stats;
};

/// Query text of a hypothesis: its tokens minus the trailing stop token.
inline std::string query_text(const Hypothesis& h, const Vocabulary& vocab) {
  std::span<const TokenId> body(h.tokens);
  if (h.finished && !body.empty()) body = body.first(body.size() - 1);
  return vocab.decode(body);
}

namespace detail {

/// Detokenizes the final list. Unfinished hypotheses are only surfaced when no
/// finished one exists.
inline SuggestionList to_suggestions(const std::vector<Hypothesis>& top, const Vocabulary& vocab,
                                     bool any_finished) {
  SuggestionList list;
  for (const auto& h : top) {
    if (any_finished && !h.finished) continue;
    list.entries.push_back({query_text(h, vocab), h.score, h.tokens, h.finished});
  }
  return list;
}

inline TokenSequence joined(std::span<const TokenId> context, const TokenSequence& gen) {
  TokenSequence seq(context.begin(), context.end());
  seq.insert(seq.end(), gen.begin(), gen.end());
  return seq;
}

inline DecodeResult finish(std::vector<Hypothesis> pool, std::size_t k, bool any_finished,
                           const Vocabulary& vocab, DecodeStats stats) {
  keep_top(pool, k);
  DecodeResult out;
  stats.result_count = pool.size();
  stats.unfinished_in_output = static_cast<std::size_t>(
      std::count_if(pool.begin(), pool.end(), [](const Hypothesis& h) { return !h.finished; }));
  out.suggestions = to_suggestions(pool, vocab, any_finished);
  out.hypotheses = std::move(pool);
  out.stats = stats;
  return out;
}

}  // namespace detail

/// Plain beam search of width K. Each beam reads its full next-token
/// distribution and branches on its K most likely tokens (ties by lower id);
/// stop expansions are collected as finished results and the best K
/// unfinished expansions continue. Returns Top-K(finished u beams).
inline DecodeResult beam_search(const ScorerModel& model, std::span<const TokenId> context,
                                std::size_t K, std::size_t T) {
  if (K < 1 || T < 1) throw ConfigError("beam_search requires K >= 1 and T >= 1");
  for (TokenId id : context) model.vocab().check(id);
  std::vector<Hypothesis> beams{Hypothesis{}};
  std::vector<Hypothesis> finished;
  DecodeStats stats;
  stats.exit_reason = ExitReason::kBudget;
  std::vector<double> lp;
  for (std::size_t t = 1; t <= T; ++t) {
    if (beams.empty()) {
      stats.exit_reason = ExitReason::kBeamsExhausted;
      break;
    }
    stats.steps = t;
    std::vector<Hypothesis> expansions;
    for (const auto& beam : beams) {
      const auto seq = detail::joined(context, beam.tokens);
      model.log_probs(model.context_key(seq), lp);
      ++stats.model_calls;
      std::vector<std::pair<double, TokenId>> ranked;
      for (TokenId v : model.active_ids()) ranked.emplace_back(lp[static_cast<std::size_t>(v)], v);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      if (ranked.size() > K) ranked.resize(K);
      for (const auto& [logp, v] : ranked) {
        Hypothesis next{beam.tokens, beam.score + logp, false};
        next.tokens.push_back(v);
        if (Vocabulary::is_stop(v)) {
          next.finished = true;
          finished.push_back(std::move(next));
        } else {
          expansions.push_back(std::move(next));
        }
      }
    }
    keep_top(expansions, K);
    beams = std::move(expansions);
  }
  const bool any_finished = !finished.empty();
  finished.insert(finished.end(), beams.begin(), beams.end());
  return detail::finish(std::move(finished), K, any_finished, model.vocab(), stats);
}

/// Quality-aware accelerated beam search.
///
/// Per step every active beam is expanded over its K_search most likely tokens.
/// All new scores feed a window holding the K_win best scores of the step.
/// Stop expansions scoring above tau are provisional; they are accepted when
/// they beat the window minimum and are >= tau. Decoding stops early once
/// alpha*K results are accepted (saturation) or when no continuation reaches
/// tau and at least R_min results exist (fail-safe). Surviving beams are the
/// best K_search continuations scoring >= tau.
inline DecodeResult qa_beam_search(const ScorerModel& model, std::span<const TokenId> context,
                                   const QabsParams& params) {
  params.validate();
  for (TokenId id : context) model.vocab().check(id);
  const double saturation = params.alpha * static_cast<double>(params.K);
  std::vector<Hypothesis> beams{Hypothesis{}};
  std::vector<Hypothesis> accepted;
  DecodeStats stats;
  stats.exit_reason = ExitReason::kBudget;
  std::vector<double> lp;
  std::vector<TokenId> fan_out;
  for (std::size_t t = 1; t <= params.T; ++t) {
    if (beams.empty()) {
      stats.exit_reason = ExitReason::kBeamsExhausted;
      break;
    }
    stats.steps = t;
    std::vector<Hypothesis> candidates;
    std::vector<Hypothesis> provisional;
    // Min-heap of the K_win best scores of this step; unfilled slots are -inf.
    std::priority_queue<double, std::vector<double>, std::greater<>> window;
    for (const auto& beam : beams) {
      const auto seq = detail::joined(context, beam.tokens);
      model.log_probs(model.context_key(seq), lp);
      ++stats.model_calls;
      fan_out = model.active_ids();
      const std::size_t width = std::min(params.K_search, fan_out.size());
      std::partial_sort(fan_out.begin(), fan_out.begin() + static_cast<std::ptrdiff_t>(width),
                        fan_out.end(), [&](TokenId a, TokenId b) {
                          const double la = lp[static_cast<std::size_t>(a)];
                          const double lb = lp[static_cast<std::size_t>(b)];
                          return la != lb ? la > lb : a < b;
                        });
      for (std::size_t i = 0; i < width; ++i) {
        const TokenId v = fan_out[i];
        Hypothesis next{beam.tokens, beam.score + lp[static_cast<std::size_t>(v)], false};
        next.tokens.push_back(v);
        if (window.size() < params.K_win) {
          window.push(next.score);
        } else if (next.score > window.top()) {
          window.pop();
          window.push(next.score);
        }
        if (Vocabulary::is_stop(v)) {
          next.finished = true;
          if (next.score > params.tau) provisional.push_back(std::move(next));
        } else {
          candidates.push_back(std::move(next));
        }
      }
    }
    const double window_min = window.size() < params.K_win ? kNegInf : window.top();
    for (auto& h : provisional) {
      if (h.score > window_min && h.score >= params.tau) accepted.push_back(std::move(h));
    }
    if (static_cast<double>(accepted.size()) >= saturation) {
      stats.exit_reason = ExitReason::kSaturation;
      break;
    }
    double best_candidate = kNegInf;
    for (const auto& h : candidates) best_candidate = std::max(best_candidate, h.score);
    if (best_candidate < params.tau && static_cast<double>(accepted.size()) >= params.R_min) {
      stats.exit_reason = ExitReason::kFailSafe;
      break;
    }
    std::erase_if(candidates, [&](const Hypothesis& h) { return !(h.score >= params.tau); });
    keep_top(candidates, params.K_search);
    beams = std::move(candidates);
  }
  const bool any_finished = !accepted.empty();
  accepted.insert(accepted.end(), beams.begin(), beams.end());
  return detail::finish(std::move(accepted), params.K, any_finished, model.vocab(), stats);
}

/// Group Y_G for GRPO: the top-G results of width-G beam search. Shorter
/// groups are returned as-is when fewer sequences exist.
inline std::vector<Hypothesis> decode_group(const ScorerModel& model,
                                            std::span<const TokenId> context, std::size_t G,
                                            std::size_t T, DecodeStats* stats = nullptr) {
  if (G < 1) throw ConfigError("group size must be >= 1");
  auto result = beam_search(model, context, G, T);
  if (stats != nullptr) *stats = result.stats;
  return std::move(result.hypotheses);
}

/// Ancestral sampling of up to G distinct sequences (exploration ablation).
/// Gives up after 4*G draws; the returned group is sorted by rank order.
inline std::vector<Hypothesis> sample_group(const ScorerModel& model,
                                            std::span<const TokenId> context, std::size_t G,
                                            std::size_t T, std::mt19937_64& rng) {
  if (G < 1) throw ConfigError("group size must be >= 1");
  std::vector<Hypothesis> group;
  std::vector<double> lp;
  std::vector<double> weights;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t draw = 0; draw < 4 * G && group.size() < G; ++draw) {
    Hypothesis h;
    TokenSequence seq(context.begin(), context.end());
    for (std::size_t t = 0; t < T; ++t) {
      model.log_probs(model.context_key(seq), lp);
      double u = unit(rng);
      TokenId pick = model.active_ids().back();
      for (TokenId v : model.active_ids()) {
        u -= std::exp(lp[static_cast<std::size_t>(v)]);
        if (u <= 0.0) {
          pick = v;
          break;
        }
      }
      h.tokens.push_back(pick);
      h.score += lp[static_cast<std::size_t>(pick)];
      seq.push_back(pick);
      if (Vocabulary::is_stop(pick)) {
        h.finished = true;
        break;
      }
    }
    const bool dup = std::any_of(group.begin(), group.end(),
                                 [&](const Hypothesis& g) { return g.tokens == h.tokens; });
    if (!dup) group.push_back(std::move(h));
  }
  std::sort(group.begin(), group.end(), ranks_before);
  return group;
}

}  // namespace sugkit
