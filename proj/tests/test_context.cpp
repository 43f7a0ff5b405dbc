#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace sugkit;

namespace {

Vocabulary text_vocab() {
  const std::vector<std::string> corpus = {"pizza hut", "burger", "coffee", "hot:1", "city:BJ",
                                           "cola", "bun"};
  return Vocabulary::from_corpus(corpus);
}

std::size_t count_of(const TokenSequence& seq, TokenId id) {
  return static_cast<std::size_t>(std::count(seq.begin(), seq.end(), id));
}

}  // namespace

TEST(Utf8, SplitsMultibyteCharacters) {
  const auto pieces = utf8::split("a\xC3\xA9\xE4\xB8\xAD\xF0\x9F\x8D\x95");
  ASSERT_EQ(pieces.size(), 4u);
  EXPECT_EQ(pieces[1], "\xC3\xA9");
  EXPECT_EQ(utf8::code_point(pieces[2]), U'中');
  EXPECT_EQ(utf8::code_point(pieces[3]), U'\U0001F355');
}

TEST(Utf8, InvalidBytesBecomeSinglePieces) {
  const auto pieces = utf8::split("a\xFF\xC3");
  ASSERT_EQ(pieces.size(), 3u);
  EXPECT_EQ(pieces[1], "\xFF");
}

TEST(Vocabulary, ReservedTokensComeFirst) {
  const auto v = text_vocab();
  for (TokenId i = 0; i < reserved::kCount; ++i) {
    EXPECT_EQ(v.token(i), reserved::kNames[i]);
    EXPECT_TRUE(Vocabulary::is_reserved(i));
  }
  EXPECT_TRUE(Vocabulary::is_stop(reserved::kEndOfSuggestion));
  EXPECT_EQ(Vocabulary::stop_ids(), std::vector<TokenId>{reserved::kEndOfSuggestion});
}

TEST(Vocabulary, CorpusOrderDoesNotMatter) {
  const std::vector<std::string> a = {"abc", "cab"};
  const std::vector<std::string> b = {"cba"};
  EXPECT_EQ(Vocabulary::from_corpus(a), Vocabulary::from_corpus(b));
}

TEST(Vocabulary, UnknownAndMarkerTextMapToUnk) {
  const auto v = text_vocab();
  std::size_t unknown = 0;
  const auto ids = v.encode("pz\xE4\xB8\xAD", &unknown);
  EXPECT_EQ(ids.back(), reserved::kUnk);
  EXPECT_EQ(unknown, 1u);
  EXPECT_EQ(v.lookup("<P>"), reserved::kUnk);
}

TEST(Vocabulary, EncodeDecodeRoundTrip) {
  const auto v = text_vocab();
  EXPECT_EQ(v.decode(v.encode("pizza hut")), "pizza hut");
}

TEST(Vocabulary, JsonRoundTrip) {
  const auto v = text_vocab();
  EXPECT_EQ(Vocabulary::from_json(v.to_json()), v);
  EXPECT_THROW(Vocabulary::from_json(nlohmann::json::array({"x"})), InputError);
}

TEST(Vocabulary, RangeChecks) {
  const auto v = text_vocab();
  EXPECT_THROW(v.check(-1), InputError);
  EXPECT_THROW(v.check(static_cast<TokenId>(v.size())), InputError);
  EXPECT_THROW(Vocabulary(std::vector<std::string>{"a", "a"}), InputError);
}

TEST(Assemble, EmptyInputsLeaveOnlyPrefixAndCity) {
  const auto ctx = assemble("pi", "BJ", CandidateIndex{}, {}, {}, {});
  EXPECT_EQ(ctx.prefix, "pi");
  EXPECT_EQ(ctx.city, "BJ");
  EXPECT_TRUE(ctx.candidates.empty());
  EXPECT_TRUE(ctx.hot_words.empty());
  EXPECT_TRUE(ctx.behavior_history.empty());
  EXPECT_TRUE(ctx.user_profile.empty());
}

TEST(Assemble, NoPaddingOfCandidates) {
  CandidateIndex index;
  index.global_lists["pi"] = {{"pizza", 3}, {"pizza hut", 2}, {"pie", 1}};
  const auto ctx = assemble("pi", "BJ", index, {}, {}, {}, 10);
  EXPECT_EQ(ctx.candidates.size(), 3u);
}

TEST(Assemble, HotWordsCutToN) {
  std::vector<std::string> hot;
  for (int i = 0; i < 12; ++i) hot.push_back("w" + std::to_string(i));
  const auto ctx = assemble("pi", "BJ", CandidateIndex{}, hot, {}, {}, 10, 10);
  ASSERT_EQ(ctx.hot_words.size(), 10u);
  EXPECT_EQ(ctx.hot_words.front(), "w0");
  EXPECT_EQ(ctx.hot_words.back(), "w9");
}

TEST(Assemble, HistoryKeepsMostRecent) {
  std::vector<std::string> history;
  for (int i = 0; i < 15; ++i) history.push_back("q" + std::to_string(i));
  const auto ctx = assemble("pi", "BJ", CandidateIndex{}, {}, history, {});
  ASSERT_EQ(ctx.behavior_history.size(), kDefaultHistoryCap);
  EXPECT_EQ(ctx.behavior_history.front(), "q5");
  EXPECT_EQ(ctx.behavior_history.back(), "q14");
}

TEST(Assemble, DropsEmptyItemsAndRejectsEmptyPrefix) {
  const std::vector<std::string> hot = {"", "cola"};
  const auto ctx = assemble("pi", "BJ", CandidateIndex{}, hot, {}, {});
  EXPECT_EQ(ctx.hot_words, std::vector<std::string>{"cola"});
  EXPECT_THROW(assemble("", "BJ", CandidateIndex{}, {}, {}, {}), InputError);
}

TEST(Serialize, Deterministic) {
  const auto v = text_vocab();
  SuggestionContext ctx{"pi", {"pizza", "pizza hut"}, {"cola"}, {"burger"}, {"city:BJ"}, "BJ"};
  EXPECT_EQ(serialize(ctx, v), serialize(ctx, v));
}

TEST(Serialize, CandidateOrderMatters) {
  const auto v = text_vocab();
  SuggestionContext a{"pi", {"pizza", "pizza hut"}, {}, {}, {}, "BJ"};
  SuggestionContext b{"pi", {"pizza hut", "pizza"}, {}, {}, {}, "BJ"};
  EXPECT_NE(serialize(a, v), serialize(b, v));
}

TEST(Serialize, EmptyFieldsStillCarryAllMarkers) {
  const auto v = text_vocab();
  const auto seq = serialize(SuggestionContext{"p", {}, {}, {}, {}, ""}, v);
  const TokenSequence expect = {reserved::kPrefix, v.lookup("p"), reserved::kCandidates,
                                reserved::kHotWords, reserved::kHistory, reserved::kProfile};
  EXPECT_EQ(seq, expect);
}

TEST(Serialize, SegmentOrderFollowsFields) {
  const auto v = text_vocab();
  SuggestionContext ctx{"pi", {"pizza", "cola"}, {"bun"}, {"coffee"}, {"hot:1"}, "BJ"};
  const auto seq = serialize(ctx, v);
  std::vector<TokenId> markers;
  for (TokenId id : seq) {
    if (Vocabulary::is_reserved(id) && id != reserved::kSeparator) markers.push_back(id);
  }
  EXPECT_EQ(markers, (std::vector<TokenId>{reserved::kPrefix, reserved::kCandidates,
                                           reserved::kHotWords, reserved::kHistory,
                                           reserved::kProfile}));
  EXPECT_EQ(count_of(seq, reserved::kSeparator), 1u);
}

TEST(Serialize, UnknownCharactersAreCounted) {
  const auto v = text_vocab();
  SerializationReport report;
  const auto seq = serialize(SuggestionContext{"p\xE4\xB8\xADx", {}, {}, {}, {}, ""}, v, &report);
  EXPECT_EQ(report.unknown_characters, 2u);
  EXPECT_EQ(count_of(seq, reserved::kUnk), 2u);
}

TEST(Serialize, MarkerTextCannotForgeMarkers) {
  const std::vector<std::string> corpus = {"<P>x"};
  const auto v = Vocabulary::from_corpus(corpus);
  const auto seq = serialize(SuggestionContext{"<P>", {}, {}, {}, {}, ""}, v);
  EXPECT_EQ(count_of(seq, reserved::kPrefix), 1u);
}

TEST(Serialize, RoundTripParseOnRandomContexts) {
  const auto v = oracle::letters_vocab(6);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(0, 4);
  std::uniform_int_distribution<int> letter(0, 5);
  auto word = [&] {
    std::string s(static_cast<std::size_t>(len(rng) + 1), 'a');
    for (auto& c : s) c = static_cast<char>('a' + letter(rng));
    return s;
  };
  auto words = [&] {
    std::vector<std::string> out(static_cast<std::size_t>(len(rng)));
    for (auto& w : out) w = word();
    return out;
  };
  for (int trial = 0; trial < 500; ++trial) {
    SuggestionContext ctx{word(), words(), words(), words(), words(), ""};
    EXPECT_EQ(parse_serialized(serialize(ctx, v), v), ctx);
  }
}

TEST(ContextJson, RoundTripAndDefaults) {
  SuggestionContext ctx{"pi", {"pizza"}, {"cola"}, {"bun"}, {"city:BJ"}, "BJ"};
  bool has = false;
  EXPECT_EQ(context_from_json(to_json(ctx), &has), ctx);
  EXPECT_TRUE(has);
  const auto bare = context_from_json({{"prefix", "pi"}}, &has);
  EXPECT_FALSE(has);
  EXPECT_TRUE(bare.candidates.empty());
}
