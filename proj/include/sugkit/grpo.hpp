#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/context.hpp"
#include "sugkit/decoder.hpp"
#include "sugkit/error.hpp"
#include "sugkit/random.hpp"
#include "sugkit/scorer.hpp"
#include "sugkit/text.hpp"
#include "sugkit/vocabulary.hpp"

namespace sugkit {

enum class GroupSampler { kBeam, kRandom };

/// kPrinted: -(1/G) sum w*A*clip(r). kPpoMin: -(1/G) sum w*min(r*A, clip(r)*A).
enum class ClipMode { kPrinted, kPpoMin };

struct GrpoConfig {
  std::size_t K = 12;
  std::size_t G = 16;
  double eps = 0.1;
  double delta = 1e-4;
  double lambda_gap = 1.0;
  double lambda_hit = 1.0;
  double lambda_rank = 2.0;
  double lambda_fmt = 4.0;
  double lambda_miss = 1.0;
  double lambda_order = 1.5;
  double beta = 0.0;
  double lr = 2e-6;
  std::size_t T = 15;  // decode budget for the group and the validity length cap
  GroupSampler sampler = GroupSampler::kBeam;
  ClipMode clip_mode = ClipMode::kPrinted;

  void validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (G <= K) throw ConfigError("group size G must exceed K");
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("eps must lie in (0, 1)");
    if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
    for (double l : {lambda_gap, lambda_hit, lambda_rank, lambda_fmt, lambda_miss, lambda_order}) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("reward coefficients must be >= 0");
    }
    if (beta != 0.0) throw ConfigError("beta > 0 (KL-regularized GRPO) is not supported");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (T < 1) throw ConfigError("T must be >= 1");
  }
};

inline constexpr std::size_t kMaxRepeatRun = 3;  // a run of 4 identical tokens is invalid

/// Format check for a generated query (stop token excluded).
inline bool validity_check(std::span<const TokenId> query_tokens, const Vocabulary& vocab,
                           std::size_t max_tokens = 15) {
  if (query_tokens.empty() || query_tokens.size() > max_tokens) return false;
  std::size_t run = 0;
  for (std::size_t i = 0; i < query_tokens.size(); ++i) {
    const TokenId id = query_tokens[i];
    if (!vocab.contains(id) || Vocabulary::is_reserved(id)) return false;
    run = (i > 0 && query_tokens[i - 1] == id) ? run + 1 : 1;
    if (run > kMaxRepeatRun) return false;
  }
  return !normalize_query(vocab.decode(query_tokens)).empty();
}

/// Same predicate for raw text, tokenized with `vocab` (unknown chars -> UNK).
inline bool validity_check(std::string_view query, const Vocabulary& vocab,
                           std::size_t max_tokens = 15) {
  const auto tokens = vocab.encode(query);
  return validity_check(std::span<const TokenId>(tokens), vocab, max_tokens);
}

/// A generated sequence counts as valid only when it ended on a stop token and
/// its body passes validity_check.
inline bool hypothesis_valid(const Hypothesis& h, const Vocabulary& vocab, std::size_t max_tokens) {
  if (!h.finished || h.tokens.empty()) return false;
  return validity_check(std::span<const TokenId>(h.tokens).first(h.tokens.size() - 1), vocab,
                        max_tokens);
}

/// Per-group inputs of the reward pipeline, in group order.
struct RewardInput {
  std::vector<double> scores;
  std::vector<bool> valid;
  std::vector<bool> matches_truth;  // all false when y* is absent
};

/// Contributions to one sequence's reward. reward = gap - fmt + hit + rank
/// - miss + floor (up to rounding); miss and floor are the amounts removed by
/// min(R, -lambda_miss) and added by max(R, 1).
struct SequenceReward {
  std::size_t rank = 0;
  double gap = 0.0;
  double fmt = 0.0;
  double hit = 0.0;
  double rank_term = 0.0;
  double miss = 0.0;
  double floor = 0.0;
  double after_miss = 0.0;  // value after the miss clamp, before the validity floor
};

struct RewardBreakdown {
  double v_gap = 0.0;
  double v_tail = 0.0;
  std::size_t cnt_bad = 0;            // invalid sequences inside the top K
  std::size_t cnt_bad_remaining = 0;  // after tail boosting
  std::optional<std::size_t> best_rank;
  std::vector<SequenceReward> sequences;
};

struct RewardResult {
  std::vector<double> rewards;
  RewardBreakdown breakdown;
};

/// Group reward pipeline: rank by score (stable on group index), gap shaping
/// against the top K, format penalty, then either the hit/rank branch or the
/// miss branch.
inline RewardResult compute_rewards(const RewardInput& in, const GrpoConfig& config) {
  const std::size_t g = in.scores.size();
  const std::size_t k = config.K;
  if (in.valid.size() != g || in.matches_truth.size() != g) {
    throw InputError("reward input vectors differ in length");
  }
  if (g < 2) throw ConfigError("reward computation needs at least two sequences");
  if (g <= k) throw ConfigError("group of " + std::to_string(g) + " does not exceed K=" +
                                std::to_string(k) + "; tail penalty undefined");

  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return in.scores[a] > in.scores[b]; });
  std::vector<std::size_t> rank(g);
  for (std::size_t r = 0; r < g; ++r) rank[order[r]] = r + 1;

  RewardResult out;
  auto& bd = out.breakdown;
  auto& R = out.rewards;
  R.assign(g, 0.0);
  bd.sequences.resize(g);
  bd.v_gap = config.lambda_gap * 1.0;
  bd.v_tail = (static_cast<double>(k) * bd.v_gap) / static_cast<double>(g - k);

  for (std::size_t i = 0; i < g; ++i) {
    auto& s = bd.sequences[i];
    s.rank = rank[i];
    s.gap = rank[i] <= k ? bd.v_gap : -bd.v_tail;
    R[i] += s.gap;
    if (!in.valid[i]) {
      R[i] -= config.lambda_fmt;
      s.fmt = config.lambda_fmt;
      if (rank[i] <= k) ++bd.cnt_bad;
    }
  }
  std::size_t cnt_bad = bd.cnt_bad;

  std::optional<std::size_t> idx;
  for (std::size_t i = 0; i < g; ++i) {
    if (in.matches_truth[i] && (!idx || rank[i] < rank[*idx])) idx = i;
  }

  if (idx) {
    const std::size_t best = rank[*idx];
    bd.best_rank = best;
    const double rank_bonus = config.lambda_rank / std::log10(static_cast<double>(best) + 1.0);
    const double hit = best <= k ? config.lambda_hit : config.lambda_hit + bd.v_tail;
    double bonus = rank_bonus;
    bonus += hit;
    R[*idx] += bonus;
    bd.sequences[*idx].hit = hit;
    bd.sequences[*idx].rank_term = rank_bonus;
    // Everything ranked above the target: order[0 .. best-2].
    for (std::size_t r = 0; r + 1 < best; ++r) {
      const std::size_t j = order[r];
      const double penalty = config.lambda_rank / std::log10(static_cast<double>(r + 1) + 1.0);
      R[j] -= penalty;
      bd.sequences[j].rank_term = -penalty;
    }
    for (std::size_t j = 0; j < g && cnt_bad > 0; ++j) {
      if (rank[j] > k && in.valid[j]) {
        const double before = R[j];
        R[j] = std::max(R[j], 1.0);
        bd.sequences[j].floor = R[j] - before;
        --cnt_bad;
      }
    }
    for (std::size_t i = 0; i < g; ++i) bd.sequences[i].after_miss = R[i];
  } else {
    for (std::size_t r = 0; r < g && (r + 1) <= k / 2; ++r) {
      const std::size_t i = order[r];
      const double before = R[i];
      R[i] = std::min(R[i], -config.lambda_miss);
      bd.sequences[i].miss = before - R[i];
    }
    for (std::size_t i = 0; i < g; ++i) {
      bd.sequences[i].after_miss = R[i];
      if (in.valid[i]) {
        const double before = R[i];
        R[i] = std::max(R[i], 1.0);
        bd.sequences[i].floor = R[i] - before;
      }
    }
  }
  bd.cnt_bad_remaining = cnt_bad;
  return out;
}

struct GroupStats {
  double mean_reward = 0.0;
  double std_reward = 0.0;  // population
  std::optional<std::size_t> hit_rank;
};

struct AdvantageResult {
  std::vector<double> advantages;
  GroupStats stats;
};

/// A_i = (R_i - mean) / (std + delta) with population std. The last entry is
/// set to minus the running sum of the others so the advantages sum to exactly
/// zero in left-to-right order.
inline AdvantageResult compute_advantages(std::span<const double> rewards, double delta) {
  if (rewards.empty()) throw InputError("advantages need a non-empty reward vector");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  const double n = static_cast<double>(rewards.size());
  const double pivot = rewards[0];
  double shifted = 0.0;
  for (double r : rewards) shifted += r - pivot;
  const double mean = pivot + shifted / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / n);
  AdvantageResult out;
  out.stats.mean_reward = mean;
  out.stats.std_reward = sd;
  out.advantages.resize(rewards.size());
  double running = 0.0;
  for (std::size_t i = 0; i + 1 < rewards.size(); ++i) {
    out.advantages[i] = (rewards[i] - mean) / (sd + delta);
    running += out.advantages[i];
  }
  out.advantages.back() = rewards.size() == 1 ? 0.0 : -running;
  return out;
}

struct LossTerms {
  double loss = 0.0;
  std::vector<double> ratios;
  std::vector<double> factors;       // clipped ratio entering the loss
  std::vector<bool> clipped;         // true where the factor carries no gradient
  std::vector<double> dloss_dlogp;   // d loss / d log pi_theta(y_i)
};

/// Clipped group surrogate. The clip factor passes gradient only where the
/// ratio lies inside [1-eps, 1+eps].
inline LossTerms grpo_loss_terms(std::span<const double> policy_logprobs,
                                 std::span<const double> ref_logprobs,
                                 std::span<const double> advantages,
                                 std::span<const double> omega, double eps,
                                 ClipMode mode = ClipMode::kPrinted) {
  const std::size_t g = policy_logprobs.size();
  if (ref_logprobs.size() != g || advantages.size() != g || omega.size() != g) {
    throw InputError("loss inputs differ in length");
  }
  if (g == 0) throw InputError("loss needs a non-empty group");
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("eps must lie in (0, 1)");
  LossTerms t;
  t.ratios.resize(g);
  t.factors.resize(g);
  t.clipped.resize(g);
  t.dloss_dlogp.resize(g);
  const double inv_g = 1.0 / static_cast<double>(g);
  double sum = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    if (!std::isfinite(policy_logprobs[i])) throw InputError("non-finite policy log-probability");
    if (!std::isfinite(ref_logprobs[i])) throw InputError("non-finite reference log-probability");
    const double ratio = std::exp(policy_logprobs[i] - ref_logprobs[i]);
    const double factor = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    bool passes_gradient = ratio >= 1.0 - eps && ratio <= 1.0 + eps;
    double term = omega[i] * advantages[i] * factor;
    if (mode == ClipMode::kPpoMin) {
      const double raw = omega[i] * advantages[i] * ratio;
      if (raw < term) {
        term = raw;
        passes_gradient = true;
      }
    }
    t.ratios[i] = ratio;
    t.factors[i] = factor;
    t.clipped[i] = !passes_gradient;
    t.dloss_dlogp[i] = passes_gradient ? -inv_g * omega[i] * advantages[i] * ratio : 0.0;
    sum += term;
  }
  t.loss = -(sum / static_cast<double>(g));
  if (t.loss == 0.0) t.loss = 0.0;  // drop the sign of -0
  return t;
}

inline double grpo_loss(std::span<const double> policy_logprobs,
                        std::span<const double> ref_logprobs, std::span<const double> advantages,
                        std::span<const double> omega, double eps) {
  return grpo_loss_terms(policy_logprobs, ref_logprobs, advantages, omega, eps).loss;
}

/// Loss of one decoded group under `policy` and its gradient w.r.t. the
/// policy logits. Advantages and weights are held fixed.
struct GroupLoss {
  LossTerms terms;
  ParamGradient gradient;
};

inline GroupLoss group_loss(const ScorerModel& policy, const ScorerModel& reference,
                            std::span<const TokenId> context, std::span<const Hypothesis> group,
                            std::span<const double> advantages, std::span<const double> omega,
                            double eps, ClipMode mode = ClipMode::kPrinted,
                            bool with_gradient = true) {
  std::vector<double> pol(group.size());
  std::vector<double> ref(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    pol[i] = sequence_logprob(policy, context, group[i].tokens);
    ref[i] = sequence_logprob(reference, context, group[i].tokens);
  }
  GroupLoss out{grpo_loss_terms(pol, ref, advantages, omega, eps, mode),
                ParamGradient(policy.vocab_size())};
  if (with_gradient) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      const double c = out.terms.dloss_dlogp[i];
      if (c == 0.0) continue;
      out.gradient.add_scaled(logprob_gradient(policy, context, group[i].tokens), c);
    }
  }
  return out;
}

struct TrainingInstance {
  SuggestionContext context;
  std::string truth;
  bool converted = false;
};

/// Everything computed for one training input.
struct GroupSample {
  std::vector<Hypothesis> hypotheses;
  std::vector<bool> validity;
  std::optional<std::string> truth;
  bool converted = false;
  std::vector<double> rewards;
  std::vector<double> advantages;
  RewardBreakdown breakdown;
  GroupStats stats;
};

struct TrainStepReport {
  std::size_t step = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double group_hit_rate = 0.0;
  double clip_fraction = 0.0;
  std::size_t samples = 0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const {
    return {{"step", step},
            {"loss", loss},
            {"mean_reward", mean_reward},
            {"group_hit_rate", group_hit_rate},
            {"clip_fraction", clip_fraction},
            {"samples", samples},
            {"skipped", skipped}};
  }
};

/// Decodes the group for one input and runs validity, rewards and advantages.
/// Returns nullopt when the group is too small for the reward pipeline.
inline std::optional<GroupSample> build_group(const ScorerModel& policy,
                                              std::span<const TokenId> context_tokens,
                                              const TrainingInstance& instance,
                                              const GrpoConfig& config, std::mt19937_64& rng) {
  GroupSample s;
  s.hypotheses = config.sampler == GroupSampler::kBeam
                     ? decode_group(policy, context_tokens, config.G, config.T)
                     : sample_group(policy, context_tokens, config.G, config.T, rng);
  if (s.hypotheses.size() < 2 || s.hypotheses.size() <= config.K) return std::nullopt;
  s.truth = instance.truth.empty() ? std::nullopt : std::optional<std::string>(instance.truth);
  s.converted = instance.converted;
  RewardInput in;
  for (const auto& h : s.hypotheses) {
    const bool valid = hypothesis_valid(h, policy.vocab(), config.T);
    in.scores.push_back(h.score);
    in.valid.push_back(valid);
    in.matches_truth.push_back(s.truth && h.finished &&
                               query_text(h, policy.vocab()) == *s.truth);
  }
  s.validity = in.valid;
  auto rewards = compute_rewards(in, config);
  auto adv = compute_advantages(rewards.rewards, config.delta);
  s.rewards = std::move(rewards.rewards);
  s.breakdown = std::move(rewards.breakdown);
  s.advantages = std::move(adv.advantages);
  s.stats = adv.stats;
  s.stats.hit_rank = s.breakdown.best_rank;
  return s;
}

/// One GRPO update: group-decode every input, score it, average the clipped
/// surrogate over the batch and take a gradient step on `policy`.
inline TrainStepReport train_step(ScorerModel& policy, const ScorerModel& reference,
                                  std::span<const TrainingInstance> batch,
                                  const GrpoConfig& config, std::mt19937_64& rng) {
  config.validate();
  if (batch.empty()) throw InputError("training batch is empty");
  TrainStepReport report;
  ParamGradient total(policy.vocab_size());
  double loss_sum = 0.0;
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  std::size_t hits = 0;
  std::size_t clipped = 0;
  std::size_t terms = 0;
  std::vector<GroupLoss> losses;
  for (const auto& instance : batch) {
    const auto ctx = serialize(instance.context, policy.vocab());
    auto sample = build_group(policy, ctx, instance, config, rng);
    if (!sample) {
      ++report.skipped;
      continue;
    }
    const std::vector<double> omega(sample->hypotheses.size(),
                                    sample->converted ? config.lambda_order : 1.0);
    auto gl = group_loss(policy, reference, ctx, sample->hypotheses, sample->advantages, omega,
                         config.eps, config.clip_mode);
    if (!std::isfinite(gl.terms.loss)) throw DivergenceError("non-finite GRPO loss");
    loss_sum += gl.terms.loss;
    total.add_scaled(gl.gradient, 1.0);
    for (double r : sample->rewards) reward_sum += r;
    reward_count += sample->rewards.size();
    if (sample->breakdown.best_rank) ++hits;
    for (bool c : gl.terms.clipped) clipped += c ? 1 : 0;
    terms += gl.terms.clipped.size();
    ++report.samples;
  }
  if (report.samples > 0) {
    const double n = static_cast<double>(report.samples);
    report.loss = loss_sum / n;
    report.mean_reward = reward_sum / static_cast<double>(reward_count);
    report.group_hit_rate = static_cast<double>(hits) / n;
    report.clip_fraction = static_cast<double>(clipped) / static_cast<double>(terms);
    policy.apply_gradient(total, -config.lr / n);
  }
  return report;
}

struct GrpoRunOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 0;
  // Steps between refreshes of the ratio denominator from the current policy;
  // 0 keeps the copy taken at the start for the whole run.
  std::size_t ref_sync_interval = 0;
};

/// GRPO fine-tuning loop. The reference model is a copy of `policy` taken
/// before the first step (and refreshed every `ref_sync_interval` steps when
/// that is non-zero). `on_step` (optional) sees every report.
inline std::vector<TrainStepReport> grpo_train(
    ScorerModel& policy, std::span<const TrainingInstance> data, const GrpoConfig& config,
    const GrpoRunOptions& options,
    const std::function<void(const TrainStepReport&)>& on_step = {}) {
  config.validate();
  if (data.empty()) throw InputError("GRPO dataset is empty");
  if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");
  ScorerModel reference = policy;
  auto shuffle_rng = substream(options.seed, "grpo.shuffle");
  auto sample_rng = substream(options.seed, "grpo.sampler");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainStepReport> reports;
  std::vector<TrainingInstance> batch;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      if (options.max_steps != 0 && reports.size() >= options.max_steps) return reports;
      if (options.ref_sync_interval != 0 && !reports.empty() &&
          reports.size() % options.ref_sync_interval == 0) {
        reference = policy;
      }
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
        batch.push_back(data[order[i]]);
      }
      auto report = train_step(policy, reference, batch, config, sample_rng);
      report.step = reports.size();
      if (on_step) on_step(report);
      reports.push_back(report);
    }
  }
  return reports;
}

}  // namespace sugkit
