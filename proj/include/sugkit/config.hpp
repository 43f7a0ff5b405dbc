#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <type_traits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/context.hpp"
#include "sugkit/decoder.hpp"
#include "sugkit/error.hpp"
#include "sugkit/grpo.hpp"

namespace sugkit {

/// Every tunable of the pipeline under one roof. Hyperparameters keep their
/// conventional short names (m, n, K, G, eps, ...) so the config file, the
/// CLI flags and the code agree.
struct RunConfig {
  // Context assembly.
  std::size_t m = 10;
  std::size_t n = 10;
  std::size_t history_cap = 10;
  // Decoding.
  std::size_t K = 12;
  std::size_t T = 15;
  double tau = -15.0;
  double alpha = 1.8;
  double R_min = 4.0;
  std::size_t K_win = 15;
  std::size_t K_search = 12;
  // GRPO.
  std::size_t G = 16;
  double eps = 0.1;
  double delta = 1e-4;
  double lambda_gap = 1.0;
  double lambda_hit = 1.0;
  double lambda_rank = 2.0;
  double lambda_fmt = 4.0;
  double lambda_miss = 1.0;
  double lambda_order = 1.5;
  double lr = 2e-6;
  double beta = 0.0;
  std::string sampler = "beam";
  std::size_t grpo_epochs = 1;
  std::size_t grpo_batch = 8;
  std::size_t ref_sync_interval = 0;
  // SFT and the scorer.
  int order = 3;
  std::size_t sft_epochs = 1;
  std::size_t sft_batch = 0;
  double sft_lr = 2e-6;
  std::size_t prune_top_n = 30000;
  // Mining.
  std::int64_t window_days = 7;
  // Paths.
  std::string logs;
  std::string index;
  std::string checkpoint;
  std::string seed_checkpoint;
  std::string train_data;
  std::string eval_data;
  std::string fixtures;
  std::string reports;
  // Randomness.
  std::uint64_t seed = 0;

  QabsParams qabs() const {
    QabsParams p;
    p.K = K;
    p.T = T;
    p.tau = tau;
    p.alpha = alpha;
    p.R_min = R_min;
    p.K_search = K_search;
    p.K_win = K_win;
    return p;
  }

  GrpoConfig grpo() const {
    GrpoConfig c;
    c.K = K;
    c.G = G;
    c.eps = eps;
    c.delta = delta;
    c.lambda_gap = lambda_gap;
    c.lambda_hit = lambda_hit;
    c.lambda_rank = lambda_rank;
    c.lambda_fmt = lambda_fmt;
    c.lambda_miss = lambda_miss;
    c.lambda_order = lambda_order;
    c.beta = beta;
    c.lr = lr;
    c.T = T;
    c.sampler = sampler == "random" ? GroupSampler::kRandom : GroupSampler::kBeam;
    return c;
  }

  void validate() const {
    qabs().validate();
    grpo().validate();
    if (sampler != "beam" && sampler != "random") throw ConfigError("sampler must be beam or random");
    if (window_days < 1) throw ConfigError("window_days must be >= 1");
    if (order < 0 || order > ScorerModel::kMaxOrder) throw ConfigError("order out of range");
    if (grpo_batch < 1) throw ConfigError("grpo_batch must be >= 1");
    if (!(sft_lr >= 0.0)) throw ConfigError("sft_lr must be >= 0");
  }

  bool operator==(const RunConfig&) const = default;
};

/// Calls `fn(name, field)` for every config field, in file order.
template <class Config, class Fn>
void for_each_field(Config& c, Fn&& fn) {
  fn("m", c.m);
  fn("n", c.n);
  fn("history_cap", c.history_cap);
  fn("K", c.K);
  fn("T", c.T);
  fn("tau", c.tau);
  fn("alpha", c.alpha);
  fn("R_min", c.R_min);
  fn("K_win", c.K_win);
  fn("K_search", c.K_search);
  fn("G", c.G);
  fn("eps", c.eps);
  fn("delta", c.delta);
  fn("lambda_gap", c.lambda_gap);
  fn("lambda_hit", c.lambda_hit);
  fn("lambda_rank", c.lambda_rank);
  fn("lambda_fmt", c.lambda_fmt);
  fn("lambda_miss", c.lambda_miss);
  fn("lambda_order", c.lambda_order);
  fn("lr", c.lr);
  fn("beta", c.beta);
  fn("sampler", c.sampler);
  fn("grpo_epochs", c.grpo_epochs);
  fn("grpo_batch", c.grpo_batch);
  fn("ref_sync_interval", c.ref_sync_interval);
  fn("order", c.order);
  fn("sft_epochs", c.sft_epochs);
  fn("sft_batch", c.sft_batch);
  fn("sft_lr", c.sft_lr);
  fn("prune_top_n", c.prune_top_n);
  fn("window_days", c.window_days);
  fn("logs", c.logs);
  fn("index", c.index);
  fn("checkpoint", c.checkpoint);
  fn("seed_checkpoint", c.seed_checkpoint);
  fn("train_data", c.train_data);
  fn("eval_data", c.eval_data);
  fn("fixtures", c.fixtures);
  fn("reports", c.reports);
  fn("seed", c.seed);
}

/// Infinite doubles (the gating thresholds may be disabled) are written as
/// the strings "inf" and "-inf" since JSON has no literal for them.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for_each_field(c, [&](const char* name, const auto& v) {
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      if (std::isinf(v)) {
        j[name] = v > 0 ? "inf" : "-inf";
        return;
      }
    }
    j[name] = v;
  });
  return j;
}

/// Unknown keys are rejected; missing keys keep their defaults.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json known = config_to_json(RunConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key: " + key);
  }
  RunConfig c;
  for_each_field(c, [&](const char* name, auto& field) {
    if (!j.contains(name)) return;
    const auto& v = j.at(name);
    using T = std::decay_t<decltype(field)>;
    try {
      if constexpr (std::is_floating_point_v<T>) {
        if (v.is_string()) {
          const auto s = v.get<std::string>();
          if (s == "inf" || s == "+inf") {
            field = kPosInf;
          } else if (s == "-inf") {
            field = kNegInf;
          } else {
            throw ConfigError(std::string("bad value for ") + name + ": " + s);
          }
          return;
        }
        if (!v.is_number()) throw ConfigError(std::string(name) + " must be a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(std::string(name) + " must be an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() &&
            v.get<std::int64_t>() < 0) {
          throw ConfigError(std::string(name) + " must be non-negative");
        }
      } else if (!v.is_string()) {
        throw ConfigError(std::string(name) + " must be a string");
      }
      field = v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid value for ") + name + ": " + e.what());
    }
  });
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write config file " + path);
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace sugkit
