#include "oracles.hpp"
#include "test_util.hpp"
#include "viralbench/corpus.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace viralbench;
using namespace viralbench::corpus;

namespace {

const char* kThreeArticles =
    R"({"id":"a1","title":"Moon landing","description":"Apollo 11","source":"bbc","engagement":12,"veracity":0})"
    "\n"
    R"({"id":"a2","title":"Cure found","description":"Miracle pill","source":"blog","engagement":4500,"veracity":1})"
    "\n"
    R"({"id":"a3","title":"Rain today","description":"Forecast","source":"bbc","engagement":0})"
    "\n";

std::string series_line(const std::string& id, const std::vector<double>& timestamps) {
  std::string tweets;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (i) tweets += ",";
    tweets += R"({"id":"t)" + std::to_string(i) + R"(","text":"x","timestamp":)" + std::to_string(timestamps[i]) +
              R"(,"followers":1,"following":2,"verified":false,"likes":3})";
  }
  return R"({"id":")" + id + R"(","veracity":1,"tweets":[)" + tweets + "]}\n";
}

std::vector<double> delta_ts(const TweetSeries& s) {
  std::vector<double> out;
  for (const auto& t : s.tweets) out.push_back(t.delta_t);
  return out;
}

}  // namespace

TEST(LoadArticles, ThreeRecords) {
  std::istringstream in(kThreeArticles);
  const auto a = parse_articles(in);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].id, "a1");
  EXPECT_EQ(a[0].title, "Moon landing");
  EXPECT_EQ(a[0].description, "Apollo 11");
  EXPECT_EQ(a[0].source, "bbc");
  EXPECT_EQ(a[0].engagement, 12);
  EXPECT_EQ(a[0].veracity, 0);
  EXPECT_EQ(a[1].engagement, 4500);
  EXPECT_EQ(a[1].veracity, 1);
  EXPECT_FALSE(a[2].veracity.has_value());
}

TEST(LoadArticles, NegativeEngagementNamesField) {
  std::istringstream in(R"({"id":"a1","title":"t","description":"d","source":"s","engagement":-5})");
  std::string msg;
  EXPECT_EQ(testutil::error_kind([&] { parse_articles(in); }, &msg), ErrorKind::validation);
  EXPECT_NE(msg.find("engagement"), std::string::npos);
}

TEST(LoadArticles, DuplicateIdIsIntegrityError) {
  std::istringstream in(R"({"id":"a1","title":"t","description":"d","source":"s","engagement":1})"
                        "\n"
                        R"({"id":"a1","title":"u","description":"e","source":"s","engagement":2})");
  EXPECT_EQ(testutil::error_kind([&] { parse_articles(in); }), ErrorKind::integrity);
}

TEST(LoadArticles, MalformedRecordNamesLine) {
  std::istringstream in(R"({"id":"a1","title":"t","description":"d","source":"s","engagement":1})"
                        "\n{not json\n");
  std::string msg;
  EXPECT_EQ(testutil::error_kind([&] { parse_articles(in); }, &msg), ErrorKind::parse);
  EXPECT_NE(msg.find("line 2"), std::string::npos);
}

TEST(LoadArticles, EmptyDescriptionRejectedUnlessAllowed) {
  const std::string line = R"({"id":"a1","title":"t","description":"   ","source":"s","engagement":1})";
  std::istringstream strict(line);
  EXPECT_EQ(testutil::error_kind([&] { parse_articles(strict); }), ErrorKind::validation);
  std::istringstream relaxed(line);
  LoadOptions opts;
  opts.allow_empty_description = true;
  EXPECT_EQ(parse_articles(relaxed, opts).size(), 1u);
}

TEST(LoadArticles, UnknownFieldWarns) {
  std::istringstream in(R"({"id":"a1","title":"t","description":"d","source":"s","engagement":1,"extra":3})");
  std::vector<std::string> warnings;
  EXPECT_EQ(parse_articles(in, {}, &warnings).size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("extra"), std::string::npos);
}

TEST(LoadArticles, CanonicalRoundTrip) {
  std::istringstream in(kThreeArticles);
  const auto a = parse_articles(in);
  std::ostringstream first;
  write_articles(first, a);
  std::istringstream again(first.str());
  std::ostringstream second;
  write_articles(second, parse_articles(again));
  EXPECT_EQ(first.str(), second.str());
}

TEST(LoadTweetSeries, SubtractsFirstTimestamp) {
  std::istringstream in(series_line("s1", {100, 160, 400}));
  const auto s = parse_tweet_series(in);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(delta_ts(s[0]), (std::vector<double>{0, 60, 300}));
}

TEST(LoadTweetSeries, SingleTweet) {
  std::istringstream in(series_line("s1", {12345}));
  EXPECT_EQ(delta_ts(parse_tweet_series(in)[0]), (std::vector<double>{0}));
}

TEST(LoadTweetSeries, OutOfOrderIsSorted) {
  std::istringstream in(series_line("s1", {50, 10}));
  const auto s = parse_tweet_series(in)[0];
  EXPECT_EQ(delta_ts(s), (std::vector<double>{0, 40}));
  EXPECT_EQ(s.tweets[0].id, "t1");
}

TEST(LoadTweetSeries, EmptySeriesRejected) {
  std::istringstream in(R"({"id":"s1","tweets":[]})");
  EXPECT_EQ(testutil::error_kind([&] { parse_tweet_series(in); }), ErrorKind::validation);
}

TEST(LoadTweetSeries, UnparseableTimestamp) {
  std::istringstream in(
      R"({"id":"s1","tweets":[{"id":"t","text":"x","timestamp":"soon","followers":1,"following":1,"verified":false,"likes":0}]})");
  EXPECT_EQ(testutil::error_kind([&] { parse_tweet_series(in); }), ErrorKind::parse);
}

TEST(LoadTweetSeries, CanonicalRoundTripKeepsDeltas) {
  std::istringstream in(series_line("s1", {50, 10, 70}) + series_line("s2", {3}));
  const auto s = parse_tweet_series(in);
  std::ostringstream first;
  write_tweet_series(first, s);
  std::istringstream again(first.str());
  const auto back = parse_tweet_series(again);
  std::ostringstream second;
  write_tweet_series(second, back);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(delta_ts(back[0]), (std::vector<double>{0, 40, 60}));
}

TEST(NormalizeTimestamps, Examples) {
  EXPECT_EQ(normalize_timestamps(std::vector<double>{1000, 1030}), (std::vector<double>{0, 30}));
  EXPECT_EQ(normalize_timestamps(std::vector<double>{7}), (std::vector<double>{0}));
  EXPECT_EQ(normalize_timestamps(std::vector<double>{5, 5, 5}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(testutil::error_kind([] { normalize_timestamps(std::vector<double>{}); }), ErrorKind::validation);
}

TEST(NormalizeTimestamps, SortThenSubtractProperty) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> raw(1 + rng.below(12));
    for (double& x : raw) x = std::floor(rng.uniform(0, 1e6));
    const auto out = normalize_timestamps(raw);
    auto sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    ASSERT_EQ(out.size(), raw.size());
    EXPECT_EQ(out[0], 0.0);
    for (std::size_t j = 0; j < out.size(); ++j) {
      EXPECT_EQ(out[j], sorted[j] - sorted[0]);
      if (j) EXPECT_GE(out[j], out[j - 1]);
    }
  }
}

TEST(ValidateCorpus, ValidIsEmpty) {
  std::istringstream in(kThreeArticles);
  EXPECT_TRUE(validate_corpus(parse_articles(in)).empty());
}

TEST(ValidateCorpus, SeriesStartingAtFive) {
  TweetSeries s;
  s.id = "late";
  Tweet a, b;
  a.id = "t0";
  a.delta_t = 5;
  b.id = "t1";
  b.delta_t = 9;
  s.tweets = {a, b};
  const auto report = validate_corpus(SeriesCorpus{s});
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].item_id, "late");
  EXPECT_NE(format_report(report).find("late\t"), std::string::npos);
}

TEST(ValidateCorpus, DuplicateArticleId) {
  Article a;
  a.id = "x";
  a.title = "t";
  a.description = "d";
  const auto report = validate_corpus(ArticleCorpus{a, a});
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].rule, "duplicate_id");
  EXPECT_EQ(report[0].item_id, "x");
}

TEST(Synthetic, Deterministic) {
  for (auto shape : {CorpusShape::article, CorpusShape::series}) {
    SyntheticSpec spec;
    spec.n_items = 120;
    spec.shape = shape;
    spec.seed = 17;
    const auto a = generate_synthetic_corpus(spec);
    const auto b = generate_synthetic_corpus(spec);
    std::ostringstream ca, cb, sa, sb;
    write_articles(ca, a.articles);
    write_articles(cb, b.articles);
    write_tweet_series(ca, a.series);
    write_tweet_series(cb, b.series);
    a.store.write(sa);
    b.store.write(sb);
    EXPECT_EQ(ca.str(), cb.str());
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(a.truth, b.truth);
  }
}

TEST(Synthetic, PrevalenceFivePercent) {
  SyntheticSpec spec;
  spec.n_items = 10000;
  spec.positive_rate = 0.05;
  spec.embedding_dim = 4;
  spec.seed = 3;
  const auto c = generate_synthetic_corpus(spec);
  std::size_t pos = 0;
  for (const auto& a : c.articles) pos += static_cast<std::size_t>(*a.veracity);
  const double prevalence = static_cast<double>(pos) / 10000.0;
  EXPECT_GE(prevalence, 0.03);
  EXPECT_LE(prevalence, 0.07);
}

TEST(Synthetic, SeriesSatisfyInvariants) {
  SyntheticSpec spec;
  spec.n_items = 200;
  spec.shape = CorpusShape::series;
  spec.min_length = 1;
  spec.max_length = 9;
  const auto c = generate_synthetic_corpus(spec);
  EXPECT_TRUE(validate_corpus(c.series).empty());
  for (const auto& s : c.series) {
    EXPECT_GE(s.tweets.size(), 1u);
    EXPECT_LE(s.tweets.size(), 9u);
    for (const auto& t : s.tweets) EXPECT_TRUE(c.store.contains(t.id));
  }
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.positive_rate = 1.0;
  EXPECT_EQ(testutil::error_kind([&] { spec.validate(); }), ErrorKind::config);
  spec.positive_rate = 0.5;
  spec.embedding_dim = 0;
  EXPECT_EQ(testutil::error_kind([&] { spec.validate(); }), ErrorKind::config);
}

namespace {

/// Fixed probe: class-mean difference of the title embeddings on even rows,
/// scored on odd rows.
double probe_auc(const SyntheticCorpus& c) {
  const std::size_t d = c.store.dim();
  std::vector<double> mp(d, 0.0), mn(d, 0.0);
  double np = 0, nn = 0;
  for (std::size_t i = 0; i < c.articles.size(); i += 2) {
    const auto v = c.store.lookup(title_key(c.articles[i]));
    auto& m = c.truth[i] ? mp : mn;
    (c.truth[i] ? np : nn) += 1;
    for (std::size_t k = 0; k < d; ++k) m[k] += v[k];
  }
  std::vector<double> w(d);
  for (std::size_t k = 0; k < d; ++k) w[k] = mp[k] / np - mn[k] / nn;
  std::vector<double> scores;
  std::vector<int> truth;
  for (std::size_t i = 1; i < c.articles.size(); i += 2) {
    const auto v = c.store.lookup(title_key(c.articles[i]));
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += w[k] * v[k];
    scores.push_back(s);
    truth.push_back(c.truth[i]);
  }
  return oracle::pairwise_auc(scores, truth);
}

}  // namespace

TEST(Synthetic, NoSignalGivesChanceAuc) {
  double sum = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec spec;
    spec.n_items = 1000;
    spec.text_signal_strength = 0.0;
    spec.numeric_signal_strength = 0.0;
    spec.embedding_dim = 8;
    spec.seed = seed;
    sum += probe_auc(generate_synthetic_corpus(spec));
  }
  EXPECT_NEAR(sum / 10, 0.5, 0.03);
}

TEST(Synthetic, ProbeAucMonotoneInTextSignal) {
  std::vector<double> means;
  for (double strength : {0.0, 0.5, 1.5}) {
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticSpec spec;
      spec.n_items = 600;
      spec.text_signal_strength = strength;
      spec.embedding_dim = 8;
      spec.seed = seed;
      sum += probe_auc(generate_synthetic_corpus(spec));
    }
    means.push_back(sum / 10);
  }
  EXPECT_LE(means[0], means[1]);
  EXPECT_LE(means[1], means[2]);
}
