#pragma once

// Fixtures and independent oracles shared by the unit suites and the
// acceptance runner. Nothing here calls the library routine it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sugkit/sugkit.hpp"

namespace sugkit::oracle {

inline Vocabulary letters_vocab(std::size_t letters) {
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < letters; ++i) symbols.push_back(std::string(1, char('a' + i)));
  return Vocabulary(symbols);
}

inline ScorerModel random_model(std::size_t letters, int order, std::uint64_t seed,
                                double scale = 1.0) {
  ScorerModel m(letters_vocab(letters), order);
  std::mt19937_64 rng(seed);
  randomize_logits(m, rng, scale);
  return m;
}

// ---------------------------------------------------------------------------
// Reward pipeline, transcribed statement by statement from the pseudocode.
// Ranks come from pairwise comparison rather than sorting.

struct LiteralRewardCase {
  std::size_t K = 12;
  std::vector<double> S;          // scores
  std::vector<bool> valid;
  std::vector<bool> is_truth;     // y_i == y*
  double l_gap = 1.0, l_hit = 1.0, l_rank = 2.0, l_fmt = 4.0, l_miss = 1.0;
};

inline std::vector<double> literal_rewards(const LiteralRewardCase& c) {
  const std::size_t G = c.S.size();
  const std::size_t K = c.K;
  std::vector<double> R(G, 0.0);
  std::size_t cnt_bad = 0;
  std::vector<std::size_t> rank(G);
  for (std::size_t i = 0; i < G; ++i) {
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < G; ++j) {
      if (c.S[j] > c.S[i] || (c.S[j] == c.S[i] && j < i)) ++ahead;
    }
    rank[i] = ahead + 1;
  }
  const double v_gap = c.l_gap * 1.0;
  const double v_tail = (static_cast<double>(K) * v_gap) / static_cast<double>(G - K);
  for (std::size_t i = 0; i < G; ++i) {
    if (rank[i] <= K) {
      R[i] += v_gap;
    } else {
      R[i] += -v_tail;
    }
  }
  for (std::size_t i = 0; i < G; ++i) {
    if (!c.valid[i]) {
      R[i] -= c.l_fmt;
      if (rank[i] <= K) cnt_bad++;
    }
  }
  std::optional<std::size_t> rank_star;
  for (std::size_t i = 0; i < G; ++i) {
    if (c.is_truth[i] && (!rank_star || rank[i] < *rank_star)) rank_star = rank[i];
  }
  if (rank_star) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < G; ++i) {
      if (c.is_truth[i] && rank[i] == *rank_star) idx = i;
    }
    double B = c.l_rank / std::log10(static_cast<double>(*rank_star) + 1);
    if (*rank_star <= K) {
      B += c.l_hit;
    } else {
      B += c.l_hit + v_tail;
    }
    R[idx] += B;
    for (std::size_t j = 0; j < G; ++j) {
      if (rank[j] < *rank_star) R[j] -= c.l_rank / std::log10(static_cast<double>(rank[j]) + 1);
    }
    for (std::size_t j = 0; j < G; ++j) {
      if (rank[j] > K && c.valid[j] && cnt_bad > 0) {
        R[j] = std::max(R[j], 1.0);
        cnt_bad--;
      }
    }
  } else {
    for (std::size_t i = 0; i < G; ++i) {
      if (2 * rank[i] <= K) R[i] = std::min(R[i], -c.l_miss);
    }
    for (std::size_t i = 0; i < G; ++i) {
      if (c.valid[i]) R[i] = std::max(R[i], 1.0);
    }
  }
  return R;
}

inline LiteralRewardCase random_reward_case(std::mt19937_64& rng) {
  LiteralRewardCase c;
  c.K = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
  const std::size_t G = std::uniform_int_distribution<std::size_t>(c.K + 1, 24)(rng);
  std::uniform_real_distribution<double> score(-20.0, 0.0);
  std::bernoulli_distribution coin(0.7);
  std::bernoulli_distribution tie(0.1);
  for (std::size_t i = 0; i < G; ++i) {
    // Occasional exact ties exercise the stable rank rule.
    c.S.push_back(i > 0 && tie(rng) ? c.S[i - 1] : score(rng));
    c.valid.push_back(coin(rng));
  }
  c.is_truth.assign(G, false);
  const int mode = std::uniform_int_distribution<int>(0, 2)(rng);
  if (mode >= 1) c.is_truth[std::uniform_int_distribution<std::size_t>(0, G - 1)(rng)] = true;
  if (mode == 2) c.is_truth[std::uniform_int_distribution<std::size_t>(0, G - 1)(rng)] = true;
  return c;
}

inline RewardInput to_input(const LiteralRewardCase& c) {
  return {c.S, c.valid, c.is_truth};
}

inline GrpoConfig to_config(const LiteralRewardCase& c) {
  GrpoConfig g;
  g.K = c.K;
  g.G = c.S.size();
  g.lambda_gap = c.l_gap;
  g.lambda_hit = c.l_hit;
  g.lambda_rank = c.l_rank;
  g.lambda_fmt = c.l_fmt;
  g.lambda_miss = c.l_miss;
  return g;
}

// ---------------------------------------------------------------------------
// Exhaustive decoding oracle: every finished sequence of length <= T plus
// every unfinished sequence of length exactly T, best K by (score desc,
// shorter, lexicographic). Subtrees whose prefix already scores below the
// current K-th best are skipped; extending a sequence never raises its score.

struct Scored {
  TokenSequence tokens;
  double score = 0.0;
  bool finished = false;
};

inline bool oracle_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

inline std::vector<Scored> exhaustive_top(const ScorerModel& model, const TokenSequence& context,
                                          std::size_t K, std::size_t T) {
  std::vector<Scored> best;
  auto offer = [&](const Scored& s) {
    best.push_back(s);
    std::sort(best.begin(), best.end(), oracle_before);
    if (best.size() > K) best.pop_back();
  };
  std::function<void(const Scored&)> walk = [&](const Scored& cur) {
    if (best.size() == K && cur.score < best.back().score) return;
    if (cur.tokens.size() == T) {
      offer(cur);
      return;
    }
    TokenSequence seq = context;
    seq.insert(seq.end(), cur.tokens.begin(), cur.tokens.end());
    const auto dist = model.score_next(seq);
    for (TokenId v = 0; v < static_cast<TokenId>(model.vocab_size()); ++v) {
      const double lp = dist.log_probs[static_cast<std::size_t>(v)];
      if (std::isinf(lp)) continue;
      Scored next{cur.tokens, cur.score + lp, false};
      next.tokens.push_back(v);
      if (Vocabulary::is_stop(v)) {
        next.finished = true;
        if (!(best.size() == K && next.score < best.back().score)) offer(next);
      } else {
        walk(next);
      }
    }
  };
  walk(Scored{});
  return best;
}

// ---------------------------------------------------------------------------
// Central finite differences over every entry of the listed rows.

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

template <class Loss>
double max_fd_error(ScorerModel& model, const ParamGradient& grad,
                    const std::vector<ContextKey>& rows, Loss&& loss, double h = 1e-5) {
  double worst = 0.0;
  for (ContextKey key : rows) {
    for (TokenId v : model.active_ids()) {
      const double x0 = model.logit(key, v);
      model.set_logit(key, v, x0 + h);
      const double up = loss(model);
      model.set_logit(key, v, x0 - h);
      const double down = loss(model);
      model.set_logit(key, v, x0);
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, relative_error(grad.at(key, v), numeric));
    }
  }
  return worst;
}

// Rows touched when scoring `continuation` after `context`.
inline std::vector<ContextKey> touched_rows(const ScorerModel& model, const TokenSequence& context,
                                            const TokenSequence& continuation) {
  std::vector<ContextKey> keys;
  TokenSequence seq = context;
  for (TokenId v : continuation) {
    keys.push_back(model.context_key(seq));
    seq.push_back(v);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

// ---------------------------------------------------------------------------
// Miner rebuild oracle helpers.

inline std::vector<ClickLogRecord> random_log_day(std::mt19937_64& rng, Day day,
                                                  std::size_t max_records = 12) {
  static const char* kCities[] = {"BJ", "SH", "MO"};
  static const char* kPrefixes[] = {"pi", "bu", "co"};
  static const char* kQueries[] = {"pizza", "pizza hut", "burger", "coffee", "cola", "bun"};
  std::uniform_int_distribution<std::size_t> n(0, max_records);
  std::uniform_int_distribution<std::size_t> pick3(0, 2);
  std::uniform_int_distribution<std::size_t> pick6(0, 5);
  std::bernoulli_distribution clicked(0.8);
  std::bernoulli_distribution ordered(0.3);
  std::vector<ClickLogRecord> out;
  const std::size_t count = n(rng);
  for (std::size_t i = 0; i < count; ++i) {
    ClickLogRecord r;
    r.day = day;
    r.city = kCities[pick3(rng)];
    r.prefix = kPrefixes[pick3(rng)];
    r.query = kQueries[pick6(rng)];
    r.clicked = clicked(rng);
    r.ordered = r.clicked && ordered(rng);
    out.push_back(r);
  }
  return out;
}

}  // namespace sugkit::oracle
