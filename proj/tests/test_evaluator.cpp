#include <gtest/gtest.h>

#include <cctype>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace sugkit;

namespace {

SuggestionList list_of(std::initializer_list<const char*> queries) {
  SuggestionList l;
  for (const char* q : queries) l.entries.push_back({q, 0.0, {}, true});
  return l;
}

bool always_valid(const std::string&) { return true; }

// ASCII-only normalizer used to recompute metrics from a dump.
std::string plain_normalize(const std::string& q) {
  std::string out;
  bool space = false;
  for (unsigned char c : q) {
    if (std::ispunct(c)) continue;
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

struct Recomputed {
  double hr = 0, mrr = 0, div = 0, qua = 0;
};

Recomputed recompute_from_dump(const std::string& jsonl, std::size_t k) {
  std::istringstream in(jsonl);
  std::string line;
  std::size_t n = 0, hits = 0, effective = 0;
  double rr = 0;
  std::set<std::string> unique;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ++n;
    const std::string truth = j["truth"];
    std::set<std::string> seen;
    std::size_t pos = 0;
    bool hit = false;
    for (const auto& e : j["suggestions"]) {
      ++pos;
      const std::string q = e["query"];
      unique.insert(q);
      if (!hit && q == truth) {
        hit = true;
        ++hits;
        rr += 1.0 / static_cast<double>(pos);
      }
      const bool fresh = seen.insert(plain_normalize(q)).second;
      if (fresh && e["format_valid"].get<bool>()) ++effective;
    }
  }
  const double nk = static_cast<double>(n * k);
  return {static_cast<double>(hits) / static_cast<double>(n), rr / static_cast<double>(n),
          static_cast<double>(unique.size()) / nk, static_cast<double>(effective) / nk};
}

ScorerModel says_a() {
  ScorerModel m(oracle::letters_vocab(2), 1);
  m.set_active_head({reserved::kEndOfSuggestion, 9, 10});
  m.set_logit(m.context_key(TokenSequence{reserved::kProfile}), reserved::kEndOfSuggestion, -50.0);
  m.set_logit(m.context_key(TokenSequence{reserved::kProfile}), 9, 2.0);
  for (TokenId letter : {9, 10}) {
    m.set_logit(m.context_key(TokenSequence{letter}), reserved::kEndOfSuggestion, 5.0);
  }
  return m;
}

EvalOptions small_decode() {
  EvalOptions o;
  o.decode.K = o.decode.K_search = 3;
  o.decode.T = 4;
  return o;
}

}  // namespace

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_query("Pizza Hut!"), "pizza hut");
  EXPECT_EQ(normalize_query(""), "");
  EXPECT_EQ(normalize_query("  A  B "), "a b");
  EXPECT_EQ(normalize_query("\xE3\x80\x90\xE5\xA5\xB6\xE8\x8C\xB6\xE3\x80\x91"), "\xE5\xA5\xB6\xE8\x8C\xB6");
  EXPECT_EQ(normalize_query("a\t-\tb"), "a b");
}

TEST(Normalize, AgreesWithPlainAsciiVersion) {
  std::mt19937_64 rng(1);
  const std::string alphabet = "aB ,.!-\tcD?";
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    for (std::size_t i = 0; i < rng() % 12; ++i) s += alphabet[rng() % alphabet.size()];
    EXPECT_EQ(normalize_query(s), plain_normalize(s)) << '"' << s << '"';
  }
}

TEST(Metrics, HitRateExamples) {
  const std::vector<SuggestionList> lists = {list_of({"a", "b"}), list_of({"c", "d"})};
  EXPECT_EQ(hit_rate_at_k(std::vector<std::string>{"a", "c"}, lists, 2), 1.0);
  EXPECT_EQ(hit_rate_at_k(std::vector<std::string>{"x", "y"}, lists, 2), 0.0);
  EXPECT_EQ(hit_rate_at_k(std::vector<std::string>{"b", "y"}, lists, 2), 0.5);
  EXPECT_EQ(hit_rate_at_k(std::vector<std::string>{"A", "c "}, lists, 2), 0.0);  // raw match
  EXPECT_THROW(hit_rate_at_k({}, {}, 2), InputError);
  EXPECT_THROW(hit_rate_at_k(std::vector<std::string>{"a", "c"}, lists, 1), InputError);
}

TEST(Metrics, MrrExamples) {
  const std::vector<SuggestionList> lists = {list_of({"a", "b"}), list_of({"c", "d"})};
  EXPECT_EQ(mrr(std::vector<std::string>{"b", "y"}, lists), 0.25);
  EXPECT_EQ(mrr(std::vector<std::string>{"a", "c"}, lists), 1.0);
  EXPECT_THROW(mrr({}, {}), InputError);
}

TEST(Metrics, DiversityExamples) {
  EXPECT_EQ(diversity(std::vector<SuggestionList>{list_of({"a", "b"}), list_of({"a", "b"})}, 2), 0.5);
  EXPECT_EQ(diversity(std::vector<SuggestionList>{list_of({"a", "b"}), list_of({"c", "d"})}, 2), 1.0);
  EXPECT_EQ(diversity(std::vector<SuggestionList>{list_of({"a", "a", "a"}), list_of({"a", "a", "a"})}, 3),
            1.0 / 6.0);
  EXPECT_THROW(diversity({}, 2), InputError);
}

TEST(Metrics, QualityExamples) {
  const std::vector<SuggestionList> one = {list_of({"a", "A!", "b"})};
  EXPECT_DOUBLE_EQ(quality(one, 3, always_valid), 2.0 / 3.0);
  const std::vector<SuggestionList> clean = {list_of({"a", "b"}), list_of({"c", "d"})};
  EXPECT_EQ(quality(clean, 2, always_valid), 1.0);
  const std::vector<SuggestionList> copies = {list_of({"q", "q", "q", "q"})};
  EXPECT_EQ(quality(copies, 4, always_valid), 0.25);
  const std::vector<SuggestionList> short_list = {list_of({"a"})};
  EXPECT_EQ(quality(short_list, 4, always_valid), 0.25);
  EXPECT_EQ(quality(clean, 2, [](const std::string& q) { return q != "d"; }), 0.75);
}

TEST(Metrics, InvalidEntryStillClaimsItsNormalizedForm) {
  const std::vector<SuggestionList> l = {list_of({"A!", "a"})};
  const std::vector<std::vector<bool>> flags = {{false, true}};
  EXPECT_EQ(quality(l, flags, 2), 0.0);
}

TEST(Metrics, BoundsOnRandomLists) {
  std::mt19937_64 rng(6);
  const char* pool[] = {"a", "A", "b", "b!", "c", "d d", "D  d"};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 5, k = 1 + rng() % 4;
    std::vector<SuggestionList> lists(n);
    std::vector<std::string> truths;
    for (auto& l : lists) {
      for (std::size_t j = 0; j < rng() % (k + 1); ++j) l.entries.push_back({pool[rng() % 7], 0.0, {}, true});
      truths.push_back(pool[rng() % 7]);
    }
    const double hr = hit_rate_at_k(truths, lists, k);
    const double rr = mrr(truths, lists);
    const double dv = diversity(lists, k);
    const double qu = quality(lists, k, always_valid);
    EXPECT_LE(rr, hr);
    for (double x : {hr, rr, dv, qu}) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Evaluate, PerfectModelScoresOne) {
  const auto m = says_a();
  std::vector<EvalInstance> data(3);
  for (auto& d : data) {
    d.context.prefix = "a";
    d.truth = "a";
    d.clicked = true;
  }
  const auto out = evaluate(m, nullptr, data, small_decode());
  EXPECT_EQ(out.report.overall.hr_at_k, 1.0);
  EXPECT_EQ(out.report.overall.mrr, 1.0);
  EXPECT_EQ(out.report.n_instances, 3u);
  ASSERT_TRUE(out.report.click.has_value());
  EXPECT_FALSE(out.report.order.has_value());
  EXPECT_TRUE(out.report.to_json()["slices"]["order"].is_null());
}

TEST(Evaluate, SlicesSelectInstances) {
  const auto m = says_a();
  std::vector<EvalInstance> data(4);
  for (auto& d : data) d.context.prefix = "a";
  data[0].truth = "a";
  data[0].clicked = true;
  data[0].ordered = true;
  data[1].truth = "b";
  data[1].clicked = true;
  data[2].truth = "a";
  data[3].truth = "zz";
  const auto out = evaluate(m, nullptr, data, small_decode());
  EXPECT_EQ(out.report.overall.n, 4u);
  ASSERT_TRUE(out.report.click && out.report.order);
  EXPECT_EQ(out.report.click->n, 2u);
  EXPECT_EQ(out.report.order->n, 1u);
  EXPECT_EQ(out.report.order->hr_at_k, 1.0);
  EXPECT_EQ(out.report.overall.hr_at_k, 0.75);
}

TEST(Evaluate, FailedInstancesAreCounted) {
  const auto m = says_a();
  std::vector<EvalInstance> data(2);
  data[0].context.prefix = "a";
  data[0].truth = "a";
  data[1].context.prefix = "";  // rejected during re-assembly
  data[1].truth = "a";
  CandidateIndex index;
  const auto out = evaluate(m, &index, data, small_decode());
  EXPECT_EQ(out.report.failed, 1u);
  EXPECT_EQ(out.report.n_instances, 1u);
}

TEST(Evaluate, ReportMatchesRecomputationFromDump) {
  SyntheticOptions so;
  so.train_size = 10;
  so.test_size = 60;
  so.letters = 6;
  so.seed = 4;
  const auto task = make_synthetic_task(so);
  ScorerModel model(task.vocab, 1);
  std::mt19937_64 rng(3);
  randomize_logits(model, rng, 1.0);
  EvalOptions options;
  options.decode.T = 6;
  const auto out = evaluate(model, &task.index, task.test, options);
  std::string dump;
  for (const auto& d : out.decoded) dump += d.to_json().dump() + "\n";
  const auto r = recompute_from_dump(dump, options.decode.K);
  EXPECT_NEAR(out.report.overall.hr_at_k, r.hr, 1e-12);
  EXPECT_NEAR(out.report.overall.mrr, r.mrr, 1e-12);
  EXPECT_NEAR(out.report.overall.div, r.div, 1e-12);
  EXPECT_NEAR(out.report.overall.qua, r.qua, 1e-12);
  EXPECT_EQ(evaluate(model, &task.index, task.test, options).report.to_json(), out.report.to_json());
}
