#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/error.hpp"
#include "sugkit/vocabulary.hpp"

namespace sugkit {

/// Packed id of the last `order` tokens, 16 bits per position, oldest token in
/// the highest slot.
using ContextKey = std::uint64_t;

struct TokenDistribution {
  std::vector<double> log_probs;  // indexed by token id, -inf when inactive

  double log_prob(TokenId id) const { return log_probs.at(static_cast<std::size_t>(id)); }
};

/// Sparse gradient over logits-table rows.
class ParamGradient {
 public:
  explicit ParamGradient(std::size_t vocab_size = 0) : vocab_size_(vocab_size) {}

  std::vector<double>& row(ContextKey key) {
    auto [it, inserted] = rows_.try_emplace(key);
    if (inserted) it->second.assign(vocab_size_, 0.0);
    return it->second;
  }
  const std::vector<double>* find(ContextKey key) const {
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
  }
  double at(ContextKey key, TokenId id) const {
    const auto* r = find(key);
    return r == nullptr ? 0.0 : (*r)[static_cast<std::size_t>(id)];
  }
  const std::unordered_map<ContextKey, std::vector<double>>& rows() const { return rows_; }
  std::size_t vocab_size() const { return vocab_size_; }

  void add_scaled(const ParamGradient& other, double scale) {
    if (vocab_size_ == 0) vocab_size_ = other.vocab_size_;
    for (const auto& [key, values] : other.rows_) {
      auto& dst = row(key);
      for (std::size_t v = 0; v < values.size(); ++v) dst[v] += scale * values[v];
    }
  }
  void scale(double s) {
    for (auto& [key, values] : rows_) {
      for (double& x : values) x *= s;
    }
  }

 private:
  std::size_t vocab_size_;
  std::unordered_map<ContextKey, std::vector<double>> rows_;
};

/// Order-c tabular softmax scorer. Every length-c token context owns a row of
/// logits; contexts never written have all-zero logits (uniform over the
/// active head). Read-only use is thread-safe.
class ScorerModel {
 public:
  static constexpr int kMaxOrder = 4;
  static constexpr int kDefaultOrder = 3;
  static constexpr std::size_t kMaxVocab = 1u << 16;

  explicit ScorerModel(Vocabulary vocab, int order = kDefaultOrder)
      : vocab_(std::move(vocab)), order_(order) {
    if (order_ < 0 || order_ > kMaxOrder) {
      throw ConfigError("scorer order must be in [0, " + std::to_string(kMaxOrder) + "]");
    }
    if (vocab_.size() > kMaxVocab) throw ConfigError("vocabulary too large for packed contexts");
    active_mask_.assign(vocab_.size(), true);
    active_ids_.resize(vocab_.size());
    std::iota(active_ids_.begin(), active_ids_.end(), 0);
    zero_row_.assign(vocab_.size(), 0.0);
  }

  const Vocabulary& vocab() const { return vocab_; }
  int order() const { return order_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  const std::vector<TokenId>& active_ids() const { return active_ids_; }
  bool is_active(TokenId id) const {
    return vocab_.contains(id) && active_mask_[static_cast<std::size_t>(id)];
  }
  void set_active_head(std::vector<TokenId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.empty()) throw ConfigError("active head must not be empty");
    std::vector<bool> mask(vocab_.size(), false);
    for (TokenId id : ids) {
      vocab_.check(id);
      mask[static_cast<std::size_t>(id)] = true;
    }
    active_mask_ = std::move(mask);
    active_ids_ = std::move(ids);
  }

  /// Key of the row used to predict the token following `history`; shorter
  /// histories are left-padded with <PAD>.
  ContextKey context_key(std::span<const TokenId> history) const {
    ContextKey key = 0;
    const auto n = static_cast<std::ptrdiff_t>(history.size());
    for (int i = 0; i < order_; ++i) {
      const std::ptrdiff_t pos = n - order_ + i;
      TokenId id = reserved::kPad;
      if (pos >= 0) {
        id = history[static_cast<std::size_t>(pos)];
        vocab_.check(id);
      }
      key = (key << 16) | static_cast<ContextKey>(id);
    }
    return key;
  }

  std::vector<TokenId> unpack(ContextKey key) const {
    std::vector<TokenId> ids(static_cast<std::size_t>(order_));
    for (int i = order_ - 1; i >= 0; --i) {
      ids[static_cast<std::size_t>(i)] = static_cast<TokenId>(key & 0xFFFF);
      key >>= 16;
    }
    return ids;
  }

  std::span<const double> row(ContextKey key) const {
    auto it = rows_.find(key);
    return it == rows_.end() ? std::span<const double>(zero_row_)
                             : std::span<const double>(it->second);
  }
  std::vector<double>& mutable_row(ContextKey key) {
    auto [it, inserted] = rows_.try_emplace(key);
    if (inserted) it->second.assign(vocab_.size(), 0.0);
    return it->second;
  }
  const std::unordered_map<ContextKey, std::vector<double>>& rows() const { return rows_; }

  double logit(ContextKey key, TokenId id) const { return row(key)[static_cast<std::size_t>(id)]; }
  void set_logit(ContextKey key, TokenId id, double value) {
    vocab_.check(id);
    mutable_row(key)[static_cast<std::size_t>(id)] = value;
  }

  /// Log-softmax of row `key` over the active head; inactive entries -inf.
  void log_probs(ContextKey key, std::vector<double>& out) const {
    const auto logits = row(key);
    double hi = kNegInf;
    for (TokenId id : active_ids_) hi = std::max(hi, logits[static_cast<std::size_t>(id)]);
    double sum = 0.0;
    for (TokenId id : active_ids_) sum += std::exp(logits[static_cast<std::size_t>(id)] - hi);
    const double lse = hi + std::log(sum);
    out.assign(vocab_.size(), kNegInf);
    for (TokenId id : active_ids_) {
      out[static_cast<std::size_t>(id)] = logits[static_cast<std::size_t>(id)] - lse;
    }
  }

  TokenDistribution score_next(std::span<const TokenId> tokens) const {
    for (TokenId id : tokens) vocab_.check(id);
    TokenDistribution d;
    log_probs(context_key(tokens), d.log_probs);
    return d;
  }

  void apply_gradient(const ParamGradient& grad, double step) {
    for (const auto& [key, values] : grad.rows()) {
      auto& dst = mutable_row(key);
      for (std::size_t v = 0; v < values.size(); ++v) {
        dst[v] += step * values[v];
        if (!std::isfinite(dst[v])) throw DivergenceError("parameter update produced a non-finite logit");
      }
    }
  }

  /// Same vocabulary, order, head and effective logits (absent rows == zeros).
  bool same_parameters(const ScorerModel& other) const {
    if (!(vocab_ == other.vocab_) || order_ != other.order_ || active_ids_ != other.active_ids_) {
      return false;
    }
    auto covered = [](const ScorerModel& a, const ScorerModel& b) {
      for (const auto& [key, values] : a.rows_) {
        const auto theirs = b.row(key);
        if (!std::equal(values.begin(), values.end(), theirs.begin())) return false;
      }
      return true;
    };
    return covered(*this, other) && covered(other, *this);
  }

  static constexpr int kFormatVersion = 1;

  /// Rows are written in key order and all-zero rows are omitted, so equal
  /// parameters always serialize to identical bytes.
  nlohmann::json to_json() const {
    std::vector<ContextKey> keys;
    for (const auto& [key, values] : rows_) {
      if (std::any_of(values.begin(), values.end(), [](double x) { return x != 0.0; })) {
        keys.push_back(key);
      }
    }
    std::sort(keys.begin(), keys.end());
    nlohmann::json rows = nlohmann::json::array();
    for (ContextKey key : keys) {
      rows.push_back({{"context", unpack(key)}, {"logits", rows_.at(key)}});
    }
    return {{"format", "sugkit.scorer"},
            {"version", kFormatVersion},
            {"vocab", vocab_.to_json()},
            {"order", order_},
            {"active_head", active_ids_},
            {"rows", std::move(rows)}};
  }

  static ScorerModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sugkit.scorer") throw InputError("not a scorer checkpoint");
    if (j.at("version").get<int>() != kFormatVersion) {
      throw InputError("unsupported scorer checkpoint version");
    }
    ScorerModel model(Vocabulary::from_json(j.at("vocab")), j.at("order").get<int>());
    model.set_active_head(j.at("active_head").get<std::vector<TokenId>>());
    for (const auto& r : j.at("rows")) {
      const auto ctx = r.at("context").get<std::vector<TokenId>>();
      if (ctx.size() != static_cast<std::size_t>(model.order_)) {
        throw InputError("checkpoint row context has wrong length");
      }
      auto logits = r.at("logits").get<std::vector<double>>();
      if (logits.size() != model.vocab_size()) throw InputError("checkpoint row has wrong width");
      for (double x : logits) {
        if (!std::isfinite(x)) throw InputError("checkpoint contains a non-finite logit");
      }
      model.mutable_row(model.context_key(ctx)) = std::move(logits);
    }
    return model;
  }

 private:
  Vocabulary vocab_;
  int order_;
  std::vector<bool> active_mask_;
  std::vector<TokenId> active_ids_;
  std::vector<double> zero_row_;
  std::unordered_map<ContextKey, std::vector<double>> rows_;
};

inline TokenDistribution score_next(const ScorerModel& model, std::span<const TokenId> tokens) {
  return model.score_next(tokens);
}

/// S(y): left-to-right sum of per-step log-probabilities of `continuation`.
inline double sequence_logprob(const ScorerModel& model, std::span<const TokenId> context,
                               std::span<const TokenId> continuation) {
  if (continuation.empty()) throw InputError("continuation must be non-empty");
  TokenSequence seq(context.begin(), context.end());
  for (TokenId id : seq) model.vocab().check(id);
  std::vector<double> lp;
  double score = 0.0;
  for (TokenId id : continuation) {
    model.vocab().check(id);
    model.log_probs(model.context_key(seq), lp);
    score += lp[static_cast<std::size_t>(id)];
    seq.push_back(id);
  }
  return score;
}

/// d/d(logits) of log pi(continuation | context).
inline ParamGradient logprob_gradient(const ScorerModel& model, std::span<const TokenId> context,
                                      std::span<const TokenId> continuation) {
  if (continuation.empty()) throw InputError("continuation must be non-empty");
  ParamGradient grad(model.vocab_size());
  TokenSequence seq(context.begin(), context.end());
  for (TokenId id : seq) model.vocab().check(id);
  std::vector<double> lp;
  for (TokenId target : continuation) {
    model.vocab().check(target);
    if (!model.is_active(target)) {
      throw InputError("token " + std::to_string(target) + " is outside the active head");
    }
    const ContextKey key = model.context_key(seq);
    model.log_probs(key, lp);
    auto& g = grad.row(key);
    for (TokenId id : model.active_ids()) g[static_cast<std::size_t>(id)] -= std::exp(lp[static_cast<std::size_t>(id)]);
    g[static_cast<std::size_t>(target)] += 1.0;
    seq.push_back(target);
  }
  return grad;
}

/// Restricts the head to the reserved tokens plus the `top_n` most frequent
/// non-reserved tokens (ties by lower id). Returns a new model; `clamped` is
/// set when `top_n` exceeded the vocabulary.
inline ScorerModel prune_head(const ScorerModel& model,
                              const std::map<TokenId, std::uint64_t>& token_frequencies,
                              std::size_t top_n, bool* clamped = nullptr) {
  const std::size_t vocab = model.vocab_size();
  if (top_n < static_cast<std::size_t>(reserved::kCount)) {
    throw ConfigError("top_n must be at least the number of reserved tokens (" +
                      std::to_string(reserved::kCount) + ")");
  }
  bool was_clamped = false;
  if (top_n > vocab) {
    std::clog << "warning: prune top_n " << top_n << " exceeds vocabulary size " << vocab
              << "; clamping\n";
    top_n = vocab;
    was_clamped = true;
  }
  if (clamped != nullptr) *clamped = was_clamped;
  // Every token competes for the top_n slots; reserved ids are kept regardless.
  std::vector<std::pair<std::uint64_t, TokenId>> ranked;
  for (TokenId id = 0; static_cast<std::size_t>(id) < vocab; ++id) {
    auto it = token_frequencies.find(id);
    ranked.emplace_back(it == token_frequencies.end() ? 0 : it->second, id);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<bool> keep(vocab, false);
  for (TokenId id = 0; id < reserved::kCount; ++id) keep[static_cast<std::size_t>(id)] = true;
  for (std::size_t i = 0; i < top_n; ++i) keep[static_cast<std::size_t>(ranked[i].second)] = true;
  std::vector<TokenId> head;
  for (TokenId id = 0; static_cast<std::size_t>(id) < vocab; ++id) {
    if (keep[static_cast<std::size_t>(id)]) head.push_back(id);
  }
  ScorerModel pruned = model;
  pruned.set_active_head(std::move(head));
  return pruned;
}

/// Token counts over a corpus of token sequences (frequency source for pruning).
inline std::map<TokenId, std::uint64_t> token_frequencies(
    std::span<const TokenSequence> corpus) {
  std::map<TokenId, std::uint64_t> freq;
  for (const auto& seq : corpus) {
    for (TokenId id : seq) ++freq[id];
  }
  return freq;
}

struct SftExample {
  TokenSequence context;
  TokenSequence target;  // includes the trailing stop token
};

struct SftOptions {
  int epochs = 1;
  double lr = 2e-6;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;      // shuffle order when batching
};

struct SftResult {
  ScorerModel model;
  std::vector<double> epoch_losses;  // mean token cross-entropy seen during each epoch
};

/// Mini-batch gradient descent on mean token-level cross-entropy.
inline SftResult sft_train(ScorerModel model, std::span<const SftExample> dataset,
                           const SftOptions& options) {
  if (dataset.empty()) throw InputError("SFT dataset is empty");
  if (!(options.lr >= 0.0) || !std::isfinite(options.lr)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (options.epochs < 0) throw ConfigError("epochs must be non-negative");
  const std::size_t batch = options.batch_size == 0 ? dataset.size() : options.batch_size;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::vector<double> epoch_losses;
  std::vector<double> lp;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (batch < dataset.size()) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      ParamGradient grad(model.vocab_size());
      double batch_loss = 0.0;
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = dataset[order[i]];
        if (ex.target.empty()) throw InputError("SFT target must be non-empty");
        TokenSequence seq = ex.context;
        for (TokenId target : ex.target) {
          model.vocab().check(target);
          const ContextKey key = model.context_key(seq);
          model.log_probs(key, lp);
          batch_loss -= lp[static_cast<std::size_t>(target)];
          auto& g = grad.row(key);
          for (TokenId id : model.active_ids()) {
            g[static_cast<std::size_t>(id)] -= std::exp(lp[static_cast<std::size_t>(id)]);
          }
          if (model.is_active(target)) g[static_cast<std::size_t>(target)] += 1.0;
          seq.push_back(target);
          ++batch_tokens;
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite SFT loss at epoch " + std::to_string(epoch) +
                              " (batch starting at " + std::to_string(start) + ")");
      }
      // grad holds d(sum log p); descent on mean cross-entropy adds it.
      model.apply_gradient(grad, options.lr / static_cast<double>(batch_tokens));
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }
    epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_tokens));
  }
  return {std::move(model), std::move(epoch_losses)};
}

/// Fills every context row with N(0, scale) logits. Only sensible for small
/// vocabularies and orders.
inline void randomize_logits(ScorerModel& model, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  const std::size_t v = model.vocab_size();
  std::size_t contexts = 1;
  for (int i = 0; i < model.order(); ++i) contexts *= v;
  for (std::size_t c = 0; c < contexts; ++c) {
    std::vector<TokenId> ids(static_cast<std::size_t>(model.order()));
    std::size_t rest = c;
    for (int i = model.order() - 1; i >= 0; --i) {
      ids[static_cast<std::size_t>(i)] = static_cast<TokenId>(rest % v);
      rest /= v;
    }
    auto& row = model.mutable_row(model.context_key(ids));
    for (double& x : row) x = normal(rng);
  }
}

}  // namespace sugkit
