#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/candidate_miner.hpp"
#include "sugkit/context.hpp"
#include "sugkit/decoder.hpp"
#include "sugkit/error.hpp"
#include "sugkit/grpo.hpp"
#include "sugkit/scorer.hpp"
#include "sugkit/text.hpp"

namespace sugkit {

struct EvalInstance {
  SuggestionContext context;
  std::string truth;
  bool clicked = false;
  bool ordered = false;
};

namespace detail {
inline void require_instances(std::size_t n) {
  if (n == 0) throw InputError("metric undefined on an empty instance set");
}
inline void require_lengths(std::span<const SuggestionList> lists, std::size_t k) {
  for (const auto& l : lists) {
    if (l.size() > k) throw InputError("suggestion list longer than k");
  }
}
// 1-based position of `truth` in `list`, 0 when absent.
inline std::size_t rank_of(const SuggestionList& list, const std::string& truth) {
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    if (list.entries[i].query == truth) return i + 1;
  }
  return 0;
}
}  // namespace detail

/// Fraction of instances whose truth appears verbatim in its list.
inline double hit_rate_at_k(std::span<const std::string> truths,
                            std::span<const SuggestionList> lists, std::size_t k) {
  if (truths.size() != lists.size()) throw InputError("truths and lists differ in length");
  detail::require_instances(truths.size());
  detail::require_lengths(lists, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (detail::rank_of(lists[i], truths[i]) != 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

inline double mrr(std::span<const std::string> truths, std::span<const SuggestionList> lists) {
  if (truths.size() != lists.size()) throw InputError("truths and lists differ in length");
  detail::require_instances(truths.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const std::size_t r = detail::rank_of(lists[i], truths[i]);
    if (r != 0) sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(truths.size());
}

/// Unique raw query strings over all lists, divided by N*k.
inline double diversity(std::span<const SuggestionList> lists, std::size_t k) {
  detail::require_instances(lists.size());
  if (k == 0) throw InputError("k must be >= 1");
  std::set<std::string> unique;
  for (const auto& l : lists) {
    for (const auto& e : l.entries) unique.insert(e.query);
  }
  return static_cast<double>(unique.size()) / static_cast<double>(lists.size() * k);
}

/// Share of the N*k slots holding a format-valid query whose normalized form
/// does not repeat a higher-ranked entry of the same list. Missing slots count
/// as ineffective. `format_valid[i][j]` flags entry j of list i.
inline double quality(std::span<const SuggestionList> lists,
                      std::span<const std::vector<bool>> format_valid, std::size_t k) {
  detail::require_instances(lists.size());
  if (format_valid.size() != lists.size()) throw InputError("validity flags differ in length");
  if (k == 0) throw InputError("k must be >= 1");
  std::size_t effective = 0;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& entries = lists[i].entries;
    if (format_valid[i].size() != entries.size()) {
      throw InputError("validity flags differ from list length");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t j = 0; j < entries.size() && j < k; ++j) {
      const bool fresh = seen.insert(normalize_query(entries[j].query)).second;
      if (format_valid[i][j] && fresh) ++effective;
    }
  }
  return static_cast<double>(effective) / static_cast<double>(lists.size() * k);
}

/// Convenience overload judging each raw string with `is_valid`.
inline double quality(std::span<const SuggestionList> lists, std::size_t k,
                      const std::function<bool(const std::string&)>& is_valid) {
  std::vector<std::vector<bool>> flags;
  for (const auto& l : lists) {
    auto& f = flags.emplace_back();
    for (const auto& e : l.entries) f.push_back(is_valid(e.query));
  }
  return quality(lists, flags, k);
}

struct MetricSet {
  double hr_at_k = 0.0;
  double mrr = 0.0;
  double div = 0.0;
  double qua = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const {
    return {{"hr_at_k", hr_at_k}, {"mrr", mrr}, {"div", div}, {"qua", qua}, {"n", n}};
  }
};

struct EvalReport {
  std::size_t k = 0;
  std::size_t n_instances = 0;
  std::size_t failed = 0;
  MetricSet overall;  // the Mix slice
  std::optional<MetricSet> click;
  std::optional<MetricSet> order;
  std::size_t model_calls = 0;

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<MetricSet>& m) {
      return m ? m->to_json() : nlohmann::json(nullptr);
    };
    return {{"k", k},
            {"n_instances", n_instances},
            {"failed", failed},
            {"model_calls", model_calls},
            {"hr_at_k", overall.hr_at_k},
            {"mrr", overall.mrr},
            {"div", overall.div},
            {"qua", overall.qua},
            {"slices", {{"mix", overall.to_json()}, {"click", opt(click)}, {"order", opt(order)}}}};
  }
};

/// One decoded instance, as written to the raw decode dump.
struct DecodedInstance {
  std::size_t id = 0;
  std::string truth;
  bool clicked = false;
  bool ordered = false;
  SuggestionList suggestions;
  std::vector<bool> format_valid;
  DecodeStats stats;

  nlohmann::json to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t j = 0; j < suggestions.entries.size(); ++j) {
      const auto& e = suggestions.entries[j];
      entries.push_back({{"query", e.query},
                         {"score", e.score},
                         {"finished", e.finished},
                         {"format_valid", static_cast<bool>(format_valid[j])}});
    }
    return {{"id", id},          {"truth", truth},         {"clicked", clicked},
            {"ordered", ordered}, {"suggestions", entries}, {"stats", stats.to_json()}};
  }
};

/// Metrics over a subset of decoded instances.
inline MetricSet compute_metrics(std::span<const DecodedInstance> decoded, std::size_t k) {
  std::vector<std::string> truths;
  std::vector<SuggestionList> lists;
  std::vector<std::vector<bool>> flags;
  for (const auto& d : decoded) {
    truths.push_back(d.truth);
    lists.push_back(d.suggestions);
    flags.push_back(d.format_valid);
  }
  MetricSet m;
  m.n = decoded.size();
  m.hr_at_k = hit_rate_at_k(truths, lists, k);
  m.mrr = mrr(truths, lists);
  m.div = diversity(lists, k);
  m.qua = quality(lists, flags, k);
  return m;
}

struct EvalOptions {
  QabsParams decode;
  std::size_t m = kDefaultCandidateSlots;
  std::size_t n = kDefaultHotWordCap;
  bool use_qabs = true;  // false: vanilla beam_search(K, T), used by benchmarks
};

struct EvalOutput {
  EvalReport report;
  std::vector<DecodedInstance> decoded;
};

/// Decodes one instance. Candidates are re-fetched from `index` when given,
/// otherwise the instance context is used as-is. Throws InputError on bad input.
inline DecodedInstance decode_instance(const ScorerModel& model, const CandidateIndex* index,
                                       const EvalInstance& inst, const EvalOptions& options,
                                       std::size_t id = 0) {
  SuggestionContext ctx = inst.context;
  if (index != nullptr) {
    ctx = assemble(ctx.prefix, ctx.city, *index, ctx.hot_words, ctx.behavior_history,
                   ctx.user_profile, options.m, options.n);
  }
  const auto tokens = serialize(ctx, model.vocab());
  const auto result = options.use_qabs
                          ? qa_beam_search(model, tokens, options.decode)
                          : beam_search(model, tokens, options.decode.K, options.decode.T);
  DecodedInstance d;
  d.id = id;
  d.truth = inst.truth;
  d.clicked = inst.clicked;
  d.ordered = inst.ordered;
  d.suggestions = result.suggestions;
  d.stats = result.stats;
  for (const auto& e : d.suggestions.entries) {
    d.format_valid.push_back(hypothesis_valid(Hypothesis{e.tokens, e.score, e.finished},
                                              model.vocab(), options.decode.T));
  }
  return d;
}

/// Decodes every instance and reports the four metrics for the Mix, Click and
/// Order slices. Instances rejected with InputError are counted in `failed`.
inline EvalOutput evaluate(const ScorerModel& model, const CandidateIndex* index,
                           std::span<const EvalInstance> instances, const EvalOptions& options) {
  options.decode.validate();
  EvalOutput out;
  const std::size_t k = options.decode.K;
  out.report.k = k;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    try {
      auto d = decode_instance(model, index, instances[i], options, i);
      out.report.model_calls += d.stats.model_calls;
      out.decoded.push_back(std::move(d));
    } catch (const InputError&) {
      ++out.report.failed;
    }
  }
  out.report.n_instances = out.decoded.size();
  if (out.decoded.empty()) return out;
  out.report.overall = compute_metrics(out.decoded, k);
  auto slice = [&](auto pred) -> std::optional<MetricSet> {
    std::vector<DecodedInstance> sub;
    for (const auto& d : out.decoded) {
      if (pred(d)) sub.push_back(d);
    }
    if (sub.empty()) return std::nullopt;
    return compute_metrics(sub, k);
  };
  out.report.click = slice([](const DecodedInstance& d) { return d.clicked; });
  out.report.order = slice([](const DecodedInstance& d) { return d.ordered; });
  return out;
}

}  // namespace sugkit
