// sugkit: mine candidates, train, suggest, evaluate and benchmark from the
// command line. Exit codes: 0 ok, 2 bad input or config, 3 training
// divergence, 4 runtime invariant violation.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sugkit/sugkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sugkit;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitInvariant = 4;

// Defaults, then the config file (--config or $SUGKIT_CONFIG), then flags.
RunConfig resolve_config(const std::string& config_path,
                         const std::map<std::string, std::string>& overrides) {
  json j = config_to_json(RunConfig{});
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("SUGKIT_CONFIG")) path = env;
  }
  if (!path.empty()) {
    const json file = io::read_json(path);
    if (!file.is_object()) throw ConfigError(path + ": config must be a JSON object");
    for (const auto& [key, value] : file.items()) j[key] = value;
  }
  for (const auto& [key, raw] : overrides) {
    if (j.at(key).is_string() && key != "tau" && key != "alpha" && key != "R_min") {
      j[key] = raw;
      continue;
    }
    try {
      j[key] = json::parse(raw);
    } catch (const json::exception&) {
      j[key] = raw;  // "inf" / "-inf" for thresholds
    }
  }
  return config_from_json(j);
}

fs::path reports_dir(const RunConfig& c) {
  fs::path dir = c.reports.empty() ? fs::path(".") : fs::path(c.reports);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create reports directory " + dir.string());
  return dir;
}

std::string require_path(const std::string& value, const char* key) {
  if (value.empty()) throw InputError(std::string("--") + key + " is required");
  if (!fs::exists(value)) throw InputError(std::string(key) + " not found: " + value);
  return value;
}

int cmd_mine(const RunConfig& c, std::optional<Day> as_of) {
  auto in = io::open_in(require_path(c.logs, "logs"));
  std::size_t unparsable = 0;
  const auto records = read_click_log(in, &unparsable);
  Day last = 0;
  if (as_of) {
    last = *as_of;
  } else {
    for (const auto& r : records) last = std::max(last, r.day);
  }
  const DayWindow window{last - c.window_days + 1, last};
  IngestReport report;
  const auto index = build_index(ingest_logs(records, window, &report));
  if (c.index.empty()) throw InputError("--index is required");
  io::write_json(c.index, index.to_json());
  const json summary = {{"records", records.size() + unparsable},
                        {"accepted", report.accepted},
                        {"unclicked", report.unclicked},
                        {"outside_window", report.outside_window},
                        {"rejected", report.rejected + unparsable},
                        {"prefixes", index.global_lists.size()},
                        {"window", {window.first, window.last}}};
  std::cout << summary.dump() << '\n';
  return 0;
}

std::vector<TokenSequence> training_corpus(const Vocabulary& vocab,
                                           const std::vector<TrainingInstance>& data) {
  std::vector<TokenSequence> corpus;
  for (const auto& t : data) {
    corpus.push_back(serialize(t.context, vocab));
    corpus.push_back(vocab.encode(t.truth));
  }
  return corpus;
}

Vocabulary corpus_vocabulary(const std::vector<TrainingInstance>& data) {
  std::vector<std::string> texts;
  for (const auto& t : data) {
    const auto& ctx = t.context;
    texts.push_back(ctx.prefix);
    texts.push_back(t.truth);
    for (const auto* list : {&ctx.candidates, &ctx.hot_words, &ctx.behavior_history,
                             &ctx.user_profile}) {
      texts.insert(texts.end(), list->begin(), list->end());
    }
  }
  return Vocabulary::from_corpus(texts);
}

int cmd_train(const RunConfig& c, const std::string& mode) {
  const auto data = io::read_training(require_path(c.train_data, "train_data"));
  if (c.checkpoint.empty()) throw InputError("--checkpoint is required");
  auto log = io::open_out((reports_dir(c) / ("train_" + mode + ".jsonl")).string());

  if (mode == "sft") {
    ScorerModel model = c.seed_checkpoint.empty()
                            ? ScorerModel(corpus_vocabulary(data), c.order)
                            : io::read_checkpoint(require_path(c.seed_checkpoint, "seed_checkpoint"));
    const auto examples = sft_examples(data, model.vocab());
    SftOptions opt;
    opt.epochs = static_cast<int>(c.sft_epochs);
    opt.lr = c.sft_lr;
    opt.batch_size = c.sft_batch;
    opt.seed = substream_seed(c.seed, "sft.shuffle");
    auto result = sft_train(std::move(model), examples, opt);
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      log << json{{"epoch", e}, {"loss", result.epoch_losses[e]}}.dump() << '\n';
    }
    ScorerModel out = std::move(result.model);
    if (c.prune_top_n < out.vocab_size()) {
      out = prune_head(out, token_frequencies(training_corpus(out.vocab(), data)), c.prune_top_n);
    }
    io::write_json(c.checkpoint, out.to_json());
    return 0;
  }

  if (mode == "grpo") {
    ScorerModel policy = io::read_checkpoint(require_path(c.seed_checkpoint, "seed_checkpoint"));
    GrpoRunOptions opt;
    opt.epochs = c.grpo_epochs;
    opt.batch_size = c.grpo_batch;
    opt.seed = c.seed;
    opt.ref_sync_interval = c.ref_sync_interval;
    grpo_train(policy, data, c.grpo(), opt,
               [&](const TrainStepReport& r) { log << r.to_json().dump() << '\n'; });
    io::write_json(c.checkpoint, policy.to_json());
    return 0;
  }
  throw InputError("--mode must be sft or grpo");
}

int cmd_suggest(const RunConfig& c, const std::string& prefix, const std::string& city,
                const std::string& user, bool stats, bool vanilla) {
  const auto model = io::read_checkpoint(require_path(c.checkpoint, "checkpoint"));
  const auto index = io::read_index(require_path(c.index, "index"));
  io::Fixtures fixtures;
  if (!c.fixtures.empty()) fixtures = io::read_fixtures(require_path(c.fixtures, "fixtures"));
  std::vector<std::string> hot;
  if (auto it = fixtures.hot_words.find(city); it != fixtures.hot_words.end()) hot = it->second;
  io::Fixtures::User u;
  if (!user.empty()) {
    auto it = fixtures.users.find(user);
    if (it == fixtures.users.end()) throw InputError("unknown user: " + user);
    u = it->second;
  }
  const auto ctx = assemble(prefix, city, index, hot, u.history, u.profile, c.m, c.n,
                            c.history_cap);
  const auto tokens = serialize(ctx, model.vocab());
  const auto result =
      vanilla ? beam_search(model, tokens, c.K, c.T) : qa_beam_search(model, tokens, c.qabs());
  std::cout << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < result.suggestions.entries.size(); ++i) {
    const auto& e = result.suggestions.entries[i];
    std::cout << (i + 1) << '\t' << e.query << '\t' << e.score << '\n';
  }
  if (stats) std::cout << result.stats.to_json().dump() << '\n';
  return 0;
}

EvalOptions eval_options(const RunConfig& c, bool vanilla) {
  EvalOptions o;
  o.decode = c.qabs();
  o.m = c.m;
  o.n = c.n;
  o.use_qabs = !vanilla;
  return o;
}

int cmd_eval(const RunConfig& c, bool vanilla) {
  const auto model = io::read_checkpoint(require_path(c.checkpoint, "checkpoint"));
  const auto data = io::read_eval(require_path(c.eval_data, "eval_data"));
  std::optional<CandidateIndex> index;
  if (!c.index.empty()) index = io::read_index(require_path(c.index, "index"));
  const auto out = evaluate(model, index ? &*index : nullptr, data, eval_options(c, vanilla));
  const auto dir = reports_dir(c);
  io::write_json((dir / "eval_report.json").string(), out.report.to_json());
  auto dump = io::open_out((dir / "decode_dump.jsonl").string());
  for (const auto& d : out.decoded) dump << d.to_json().dump() << '\n';
  std::cout << out.report.to_json().dump() << '\n';
  return 0;
}

int cmd_bench(const RunConfig& c, const std::string& scenario, const std::vector<std::size_t>& grid,
              bool vanilla) {
  const auto model = io::read_checkpoint(require_path(c.checkpoint, "checkpoint"));
  const auto data = io::read_eval(require_path(c.eval_data, "eval_data"));
  std::optional<CandidateIndex> index;
  if (!c.index.empty()) index = io::read_index(require_path(c.index, "index"));
  BenchOptions opt;
  opt.eval = eval_options(c, vanilla);
  opt.grid = grid;
  const auto report = run_bench(scenario, model, index ? &*index : nullptr, data, opt);
  const auto dir = reports_dir(c);
  io::write_json((dir / ("bench_" + scenario + ".json")).string(), report.to_json());
  auto csv = io::open_out((dir / ("bench_" + scenario + ".csv")).string());
  report.write_csv(csv);
  std::cout << report.to_json().dump() << '\n';
  return 0;
}

int cmd_synth(const RunConfig& c, const std::string& out_dir, const SyntheticOptions& opt) {
  const auto task = make_synthetic_task(opt);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InputError("cannot create " + out_dir);
  const fs::path dir(out_dir);
  {
    auto out = io::open_out((dir / "logs.jsonl").string());
    for (const auto& r : task.logs) out << to_json(r).dump() << '\n';
  }
  {
    auto out = io::open_out((dir / "train.jsonl").string());
    for (const auto& t : task.train) out << io::to_json(t).dump() << '\n';
  }
  {
    auto out = io::open_out((dir / "eval.jsonl").string());
    for (const auto& e : task.test) out << io::to_json(e).dump() << '\n';
  }
  {
    auto out = io::open_out((dir / "fixtures.jsonl").string());
    for (std::size_t s = 0; s < opt.segments; ++s) {
      const std::string tag(1, static_cast<char>('0' + s));
      out << json{{"user", "u" + tag}, {"history", json::array()}, {"profile", {tag}}}.dump()
          << '\n';
    }
  }
  // A config tuned for the toy task, pointing at the files just written.
  RunConfig toy = c;
  toy.order = 2;
  toy.sft_epochs = 1;
  toy.sft_lr = 1.0;
  toy.sft_batch = 16;
  toy.lr = 0.3;
  toy.logs = (dir / "logs.jsonl").string();
  toy.index = (dir / "index.json").string();
  toy.train_data = (dir / "train.jsonl").string();
  toy.eval_data = (dir / "eval.jsonl").string();
  toy.fixtures = (dir / "fixtures.jsonl").string();
  toy.seed_checkpoint.clear();
  toy.checkpoint = (dir / "sft.json").string();
  toy.reports = (dir / "reports").string();
  save_config(toy, (dir / "config.json").string());
  std::cout << json{{"train", task.train.size()},
                    {"eval", task.test.size()},
                    {"logs", task.logs.size()},
                    {"vocab", task.vocab.size()}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query suggestion toolkit: candidate mining, scorer training and decoding"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (default: $SUGKIT_CONFIG)");
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::string> flag_values;
  const json defaults = config_to_json(RunConfig{});
  for (const auto& [key, value] : defaults.items()) {
    app.add_option("--" + key, flag_values[key], "config override")->group("Config overrides");
  }

  auto* mine = app.add_subcommand("mine", "build the candidate index from click logs");
  Day as_of = 0;
  auto* as_of_opt = mine->add_option("--as-of", as_of, "last day of the window (default: latest)");

  auto* train = app.add_subcommand("train", "SFT seeding or GRPO fine-tuning");
  std::string mode;
  train->add_option("--mode", mode, "sft or grpo")->required()->check(CLI::IsMember({"sft", "grpo"}));

  auto* suggest = app.add_subcommand("suggest", "print ranked suggestions for one prefix");
  std::string prefix, city, user;
  bool stats = false;
  bool vanilla = false;
  suggest->add_option("--prefix", prefix)->required();
  suggest->add_option("--city", city);
  suggest->add_option("--user", user);
  suggest->add_flag("--stats", stats, "also print decode statistics as JSON");
  suggest->add_flag("--vanilla", vanilla, "plain beam search instead of QA-BS");

  auto* eval = app.add_subcommand("eval", "decode a dataset and report HR@K, MRR, DIV, QUA");
  eval->add_flag("--vanilla", vanilla, "plain beam search instead of QA-BS");

  auto* bench = app.add_subcommand("bench", "latency/quality grids");
  std::string scenario;
  std::vector<std::size_t> grid;
  bench->add_option("--scenario", scenario)
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(std::begin(kBenchScenarios),
                                                     std::end(kBenchScenarios))));
  bench->add_option("--grid", grid, "grid values (default per scenario)")->delimiter(',');
  bench->add_flag("--vanilla", vanilla, "plain beam search instead of QA-BS");

  auto* synth = app.add_subcommand("synth", "write a synthetic toy dataset");
  std::string out_dir;
  SyntheticOptions syn;
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--train-size", syn.train_size);
  synth->add_option("--test-size", syn.test_size);
  synth->add_option("--letters", syn.letters);
  synth->add_option("--segments", syn.segments);
  synth->add_option("--cities", syn.cities);
  synth->add_option("--synth-seed", syn.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    for (const auto& [key, value] : defaults.items()) {
      if (app.count("--" + key) > 0) overrides[key] = flag_values[key];
    }
    const RunConfig config = resolve_config(config_path, overrides);
    if (*mine) return cmd_mine(config, as_of_opt->count() ? std::optional<Day>(as_of) : std::nullopt);
    if (*train) return cmd_train(config, mode);
    if (*suggest) return cmd_suggest(config, prefix, city, user, stats, vanilla);
    if (*eval) return cmd_eval(config, vanilla);
    if (*bench) return cmd_bench(config, scenario, grid, vanilla);
    if (*synth) return cmd_synth(config, out_dir, syn);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitInput;
  } catch (const OrderingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
