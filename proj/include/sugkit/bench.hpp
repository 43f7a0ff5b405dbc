#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/candidate_miner.hpp"
#include "sugkit/evaluator.hpp"
#include "sugkit/scorer.hpp"

namespace sugkit {

inline constexpr const char* kBenchScenarios[] = {"qabs_vs_vanilla", "prune_grid",
                                                  "beam_width_grid", "candidate_grid"};

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

/// Nearest-rank percentiles over per-instance wall-clock times.
inline LatencyStats latency_stats(std::vector<double> ms) {
  LatencyStats s;
  if (ms.empty()) return s;
  std::sort(ms.begin(), ms.end());
  double sum = 0.0;
  for (double x : ms) sum += x;
  s.mean_ms = sum / static_cast<double>(ms.size());
  auto pct = [&](double p) {
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(ms.size())));
    return ms[std::clamp<std::size_t>(rank, 1, ms.size()) - 1];
  };
  s.p50_ms = pct(0.50);
  s.p99_ms = pct(0.99);
  return s;
}

struct BenchPoint {
  std::string label;  // value on the grid axis
  LatencyStats latency;
  std::size_t model_calls = 0;
  double model_calls_mean = 0.0;
  MetricSet metrics;
  std::vector<std::size_t> instance_calls;  // per instance, in dataset order
  std::vector<DecodedInstance> decoded;

  nlohmann::json to_json() const {
    return {{"label", label},
            {"latency_mean_ms", latency.mean_ms},
            {"latency_p50_ms", latency.p50_ms},
            {"latency_p99_ms", latency.p99_ms},
            {"model_calls", model_calls},
            {"model_calls_mean", model_calls_mean},
            {"metrics", metrics.to_json()}};
  }
};

struct BenchReport {
  std::string scenario;
  std::string axis;
  std::vector<BenchPoint> points;
  nlohmann::json summary = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) pts.push_back(p.to_json());
    return {{"scenario", scenario}, {"axis", axis}, {"points", pts}, {"summary", summary}};
  }

  void write_csv(std::ostream& out) const {
    out << "scenario,axis,value,latency_mean_ms,latency_p50_ms,latency_p99_ms,model_calls,"
           "model_calls_mean,hr_at_k,mrr,div,qua\n";
    for (const auto& p : points) {
      out << scenario << ',' << axis << ',' << p.label << ',' << p.latency.mean_ms << ','
          << p.latency.p50_ms << ',' << p.latency.p99_ms << ',' << p.model_calls << ','
          << p.model_calls_mean << ',' << p.metrics.hr_at_k << ',' << p.metrics.mrr << ','
          << p.metrics.div << ',' << p.metrics.qua << '\n';
    }
  }
};

struct BenchOptions {
  EvalOptions eval;
  std::vector<std::size_t> grid;  // empty: scenario default
  // Token counts used to rank tokens for prune_grid; empty: counted from the
  // serialized eval contexts and truths.
  std::map<TokenId, std::uint64_t> token_counts;
};

/// Decodes every instance once at one grid point. Instances the decoder
/// rejects propagate their InputError.
inline BenchPoint run_point(const ScorerModel& model, const CandidateIndex* index,
                            std::span<const EvalInstance> instances, const EvalOptions& options,
                            std::string label) {
  options.decode.validate();
  if (instances.empty()) throw InputError("benchmark needs at least one instance");
  BenchPoint p;
  p.label = std::move(label);
  std::vector<double> ms;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto d = decode_instance(model, index, instances[i], options, i);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    p.instance_calls.push_back(d.stats.model_calls);
    p.model_calls += d.stats.model_calls;
    p.decoded.push_back(std::move(d));
  }
  p.latency = latency_stats(std::move(ms));
  p.model_calls_mean = static_cast<double>(p.model_calls) / static_cast<double>(instances.size());
  p.metrics = compute_metrics(p.decoded, options.decode.K);
  return p;
}

namespace detail {

inline std::map<TokenId, std::uint64_t> eval_token_counts(const Vocabulary& vocab,
                                                          std::span<const EvalInstance> data) {
  std::vector<TokenSequence> corpus;
  for (const auto& inst : data) {
    corpus.push_back(serialize(inst.context, vocab));
    corpus.push_back(vocab.encode(inst.truth));
  }
  return token_frequencies(corpus);
}

inline std::vector<std::size_t> or_default(const std::vector<std::size_t>& grid,
                                           std::vector<std::size_t> fallback) {
  return grid.empty() ? fallback : grid;
}

}  // namespace detail

inline BenchReport run_bench(const std::string& scenario, const ScorerModel& model,
                             const CandidateIndex* index, std::span<const EvalInstance> instances,
                             const BenchOptions& options) {
  BenchReport report;
  report.scenario = scenario;
  const EvalOptions& base = options.eval;

  if (scenario == "qabs_vs_vanilla") {
    report.axis = "qabs";
    EvalOptions vanilla = base;
    vanilla.use_qabs = false;
    vanilla.decode.K = base.decode.K_search;
    EvalOptions qabs = base;
    qabs.use_qabs = true;
    report.points.push_back(run_point(model, index, instances, vanilla, "off"));
    report.points.push_back(run_point(model, index, instances, qabs, "on"));
    const auto& v = report.points[0].instance_calls;
    const auto& q = report.points[1].instance_calls;
    std::size_t bounded = 0;
    double savings = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (q[i] <= v[i]) ++bounded;
      savings += static_cast<double>(v[i]) - static_cast<double>(q[i]);
    }
    report.summary = {{"instances", v.size()},
                      {"qabs_calls_le_vanilla", bounded},
                      {"mean_call_savings", savings / static_cast<double>(v.size())}};
    return report;
  }

  if (scenario == "prune_grid") {
    report.axis = "top_n";
    const auto counts = options.token_counts.empty()
                            ? detail::eval_token_counts(model.vocab(), instances)
                            : options.token_counts;
    const std::size_t v = model.vocab_size();
    std::vector<std::size_t> fallback = {v};
    for (std::size_t n : {v * 3 / 4, v / 2, v / 4}) {
      if (n >= static_cast<std::size_t>(reserved::kCount) && n < v) fallback.push_back(n);
    }
    for (std::size_t n : detail::or_default(options.grid, fallback)) {
      const auto pruned = prune_head(model, counts, n);
      report.points.push_back(run_point(pruned, index, instances, base, std::to_string(n)));
    }
    return report;
  }

  if (scenario == "beam_width_grid") {
    report.axis = "K";
    for (std::size_t k : detail::or_default(options.grid, {12, 10, 8, 6, 4, 2})) {
      EvalOptions o = base;
      o.decode.K = k;
      o.decode.K_search = k;
      report.points.push_back(run_point(model, index, instances, o, std::to_string(k)));
    }
    return report;
  }

  if (scenario == "candidate_grid") {
    report.axis = "m";
    for (std::size_t m : detail::or_default(options.grid, {0, 2, 4, 6, 8, 10})) {
      EvalOptions o = base;
      o.m = m;
      if (index != nullptr) {
        report.points.push_back(run_point(model, index, instances, o, std::to_string(m)));
        continue;
      }
      // Without an index the instance's own candidate list is cut to m.
      std::vector<EvalInstance> cut(instances.begin(), instances.end());
      for (auto& inst : cut) {
        if (inst.context.candidates.size() > m) inst.context.candidates.resize(m);
      }
      report.points.push_back(run_point(model, nullptr, cut, o, std::to_string(m)));
    }
    return report;
  }

  throw ConfigError("unknown bench scenario: " + scenario);
}

}  // namespace sugkit
