#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sugkit/candidate_miner.hpp"
#include "sugkit/context.hpp"
#include "sugkit/evaluator.hpp"
#include "sugkit/grpo.hpp"
#include "sugkit/random.hpp"
#include "sugkit/scorer.hpp"

namespace sugkit {

/// Toy query-suggestion world: an order-2 tabular generator produces the
/// queries users end up submitting, conditioned on a one-character user
/// segment tag carried in the profile.
struct SyntheticOptions {
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  std::size_t letters = 16;       // query alphabet a, b, c, ...
  std::size_t segments = 4;       // profile tags 0, 1, ...
  std::size_t cities = 3;
  std::size_t max_query_len = 8;  // tokens, stop excluded
  double logit_scale = 2.0;
  double stop_bias = -1.0;        // added to the stop logit of every row
  double order_rate = 0.3;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  Vocabulary vocab;
  ScorerModel generator;
  std::vector<ClickLogRecord> logs;
  CandidateIndex index;
  std::vector<TrainingInstance> train;
  std::vector<EvalInstance> test;
};

namespace detail {

inline std::string sample_query(const ScorerModel& generator, const TokenSequence& context,
                                std::size_t max_len, std::mt19937_64& rng) {
  const auto& vocab = generator.vocab();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> lp;
  for (;;) {
    TokenSequence seq = context;
    TokenSequence body;
    bool stopped = false;
    while (body.size() <= max_len) {
      generator.log_probs(generator.context_key(seq), lp);
      double u = unit(rng);
      TokenId pick = generator.active_ids().back();
      for (TokenId v : generator.active_ids()) {
        u -= std::exp(lp[static_cast<std::size_t>(v)]);
        if (u <= 0.0) {
          pick = v;
          break;
        }
      }
      if (Vocabulary::is_stop(pick)) {
        stopped = true;
        break;
      }
      body.push_back(pick);
      seq.push_back(pick);
    }
    if (stopped && !body.empty() && body.size() <= max_len &&
        validity_check(std::span<const TokenId>(body), vocab, max_len)) {
      return vocab.decode(body);
    }
  }
}

}  // namespace detail

inline SyntheticTask make_synthetic_task(const SyntheticOptions& options) {
  if (options.letters < 2 || options.letters > 26) throw ConfigError("letters must be in [2, 26]");
  if (options.segments < 1 || options.segments > 10) throw ConfigError("segments must be in [1, 10]");
  std::vector<std::string> symbols;
  for (std::size_t s = 0; s < options.segments; ++s) symbols.push_back(std::string(1, char('0' + s)));
  for (std::size_t l = 0; l < options.letters; ++l) symbols.push_back(std::string(1, char('a' + l)));
  Vocabulary vocab(symbols);

  // Generator: random logits over letters and the stop token only.
  ScorerModel generator(vocab, 2);
  {
    std::vector<TokenId> head;
    for (TokenId id = 0; id < reserved::kCount; ++id) head.push_back(id);
    for (std::size_t l = 0; l < options.letters; ++l) {
      head.push_back(vocab.lookup(std::string(1, char('a' + l))));
    }
    generator.set_active_head(head);
    auto rng = substream(options.seed, "synthetic.generator");
    std::normal_distribution<double> normal(0.0, options.logit_scale);
    std::vector<TokenId> letters;
    for (std::size_t l = 0; l < options.letters; ++l) letters.push_back(head[reserved::kCount + l]);
    std::vector<TokenId> tags;
    for (std::size_t s = 0; s < options.segments; ++s) tags.push_back(vocab.lookup(std::string(1, char('0' + s))));
    auto fill = [&](TokenId a, TokenId b) {
      auto& row = generator.mutable_row(generator.context_key(std::vector<TokenId>{a, b}));
      for (TokenId id : head) row[static_cast<std::size_t>(id)] = normal(rng);
      for (TokenId id = 0; id < reserved::kCount; ++id) {
        if (!Vocabulary::is_stop(id)) row[static_cast<std::size_t>(id)] = -30.0;
      }
      row[reserved::kEndOfSuggestion] += options.stop_bias;
    };
    for (TokenId t : tags) {
      fill(reserved::kProfile, t);
      for (TokenId l : letters) fill(t, l);
    }
    for (TokenId a : letters) {
      for (TokenId b : letters) fill(a, b);
    }
    // Never stop before the first letter.
    for (TokenId t : tags) {
      generator.mutable_row(generator.context_key(std::vector<TokenId>{reserved::kProfile, t}))
          [reserved::kEndOfSuggestion] = -30.0;
    }
  }

  auto rng = substream(options.seed, "synthetic.instances");
  std::uniform_int_distribution<std::size_t> seg(0, options.segments - 1);
  std::uniform_int_distribution<std::size_t> city(0, options.cities - 1);
  std::uniform_int_distribution<Day> day(1, 7);
  std::bernoulli_distribution ordered(options.order_rate);

  struct Draw {
    std::string tag, city, truth;
    Day day;
    bool ordered;
  };
  auto draw = [&] {
    Draw d;
    d.tag = std::string(1, char('0' + seg(rng)));
    d.city = "city" + std::to_string(city(rng));
    const TokenSequence ctx = {reserved::kProfile, vocab.lookup(d.tag)};
    d.truth = detail::sample_query(generator, ctx, options.max_query_len, rng);
    d.day = day(rng);
    d.ordered = ordered(rng);
    return d;
  };

  std::vector<Draw> train_draws;
  std::vector<Draw> test_draws;
  for (std::size_t i = 0; i < options.train_size; ++i) train_draws.push_back(draw());
  for (std::size_t i = 0; i < options.test_size; ++i) test_draws.push_back(draw());

  SyntheticTask task{vocab, generator, {}, {}, {}, {}};
  for (const auto& d : train_draws) {
    task.logs.push_back({d.day, d.city, d.truth.substr(0, 1), d.truth, true, d.ordered});
  }
  task.index = build_index(ingest_logs(task.logs, DayWindow{1, 7}));
  auto context_for = [&](const Draw& d) {
    const std::vector<std::string> profile = {d.tag};
    return assemble(d.truth.substr(0, 1), d.city, task.index, {}, {}, profile);
  };
  for (const auto& d : train_draws) task.train.push_back({context_for(d), d.truth, d.ordered});
  for (const auto& d : test_draws) task.test.push_back({context_for(d), d.truth, true, d.ordered});
  return task;
}

/// SFT pairs: serialized context -> truth tokens followed by the stop token.
inline std::vector<SftExample> sft_examples(std::span<const TrainingInstance> data,
                                            const Vocabulary& vocab) {
  std::vector<SftExample> out;
  for (const auto& inst : data) {
    SftExample ex{serialize(inst.context, vocab), vocab.encode(inst.truth)};
    ex.target.push_back(reserved::kEndOfSuggestion);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Fraction of instances whose truth appears among the G group sequences.
inline double group_hit_rate(const ScorerModel& policy, std::span<const EvalInstance> data,
                             std::size_t G, std::size_t T) {
  if (data.empty()) throw InputError("group hit-rate needs instances");
  std::size_t hits = 0;
  for (const auto& inst : data) {
    const auto ctx = serialize(inst.context, policy.vocab());
    for (const auto& h : decode_group(policy, ctx, G, T)) {
      if (h.finished && query_text(h, policy.vocab()) == inst.truth) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace sugkit
