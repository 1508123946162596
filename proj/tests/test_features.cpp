#include "test_util.hpp"
#include "viralbench/features.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace viralbench;
using namespace viralbench::features;
using corpus::Tweet;
using corpus::TweetSeries;

namespace {

Tweet tweet(const std::string& id, double dt, std::int64_t followers, bool verified = false) {
  Tweet t;
  t.id = id;
  t.delta_t = dt;
  t.followers = followers;
  t.following = followers * 2 + 1;
  t.verified = verified;
  t.likes = followers % 7;
  return t;
}

TweetSeries series_of(const std::string& id, std::size_t n) {
  TweetSeries s;
  s.id = id;
  for (std::size_t j = 0; j < n; ++j) s.tweets.push_back(tweet(id + "_" + std::to_string(j), 10.0 * j, 3 * j + 1));
  return s;
}

EmbeddingStore store_for(const corpus::SeriesCorpus& series, std::size_t dim, std::uint64_t seed = 1) {
  Rng rng(seed);
  EmbeddingStore store(dim);
  for (const auto& s : series)
    for (const auto& t : s.tweets) {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.normal();
      store.insert(t.id, v);
    }
  return store;
}

NumericTransform identity_transform() {
  NumericTransform t;
  return t;
}

}  // namespace

TEST(NumericTransform, HandComputedLog1p) {
  // Counts are integers, so the {0, e-1} pair goes through delta_t.
  std::vector<Tweet> ts = {tweet("a", 0.0, 1), tweet("b", std::exp(1.0) - 1.0, 1)};
  const auto t = fit_numeric_transform(ts);
  EXPECT_NEAR(t.stats[0].mean, 0.5, 1e-15);
  EXPECT_NEAR(t.stats[0].stddev, 0.5, 1e-15);
  const auto x0 = apply_numeric_transform(t, ts[0]);
  const auto x1 = apply_numeric_transform(t, ts[1]);
  EXPECT_NEAR(x0[0], -1.0, 1e-12);
  EXPECT_NEAR(x1[0], 1.0, 1e-12);
}

TEST(NumericTransform, ConstantFeatureGetsUnitStdAndDiagnostic) {
  std::vector<Tweet> ts = {tweet("a", 0, 100), tweet("b", 5, 100), tweet("c", 9, 100)};
  for (auto& t : ts) t.following = 3 + static_cast<std::int64_t>(t.delta_t);
  const auto t = fit_numeric_transform(ts);
  EXPECT_DOUBLE_EQ(t.stats[1].mean, std::log(101.0));
  EXPECT_EQ(t.stats[1].stddev, 1.0);
  EXPECT_TRUE(t.stats[1].constant);
  bool found = false;
  for (const auto& d : t.diagnostics) found |= d.find("followers") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(NumericTransform, EmptyInputIsValidationError) {
  EXPECT_EQ(testutil::error_kind([] { fit_numeric_transform(std::vector<Tweet>{}); }), ErrorKind::validation);
}

TEST(NumericTransform, ApplyExamples) {
  std::vector<Tweet> ts = {tweet("a", 3, 10), tweet("b", 40, 200, true), tweet("c", 7, 50)};
  const auto t = fit_numeric_transform(ts);
  // delta_t = 0 maps to -mu/sigma.
  const auto x = apply_numeric_transform(t, tweet("z", 0, 10));
  EXPECT_DOUBLE_EQ(x[0], -t.stats[0].mean / t.stats[0].stddev);
  // verified passes through.
  EXPECT_EQ(apply_numeric_transform(t, tweet("v", 3, 10, true))[3], 1.0);
  EXPECT_EQ(apply_numeric_transform(t, tweet("v", 3, 10, false))[3], 0.0);
}

TEST(NumericTransform, MeanTweetMapsToZero) {
  // Values chosen so log1p of each feature is symmetric around its mean.
  Tweet lo, hi, mid;
  lo.id = "lo";
  hi.id = "hi";
  mid.id = "mid";
  lo.delta_t = 0;
  hi.delta_t = 99;
  mid.delta_t = 9;  // log1p(9) = (log1p(0) + log1p(99)) / 2
  lo.followers = 0;
  hi.followers = 99;
  mid.followers = 9;
  lo.following = 0;
  hi.following = 99;
  mid.following = 9;
  lo.likes = 0;
  hi.likes = 99;
  mid.likes = 9;
  const auto t = fit_numeric_transform(std::vector<Tweet>{lo, hi});
  const auto x = apply_numeric_transform(t, mid);
  for (std::size_t k : {0u, 1u, 2u, 4u}) EXPECT_NEAR(x[k], 0.0, 1e-12);
  EXPECT_EQ(x[3], 0.0);
}

TEST(NumericTransform, LeakageGuard) {
  corpus::SyntheticSpec spec;
  spec.n_items = 60;
  spec.shape = corpus::CorpusShape::series;
  spec.seed = 2;
  const auto c = corpus::generate_synthetic_corpus(spec);
  std::vector<std::size_t> train(40), all(60);
  std::iota(train.begin(), train.end(), 0);
  std::iota(all.begin(), all.end(), 0);
  const auto a = EncodedDataset::from_series(c.series, c.store, train, 5).transform();
  const auto b = fit_numeric_transform(c.series, all);
  const auto direct = fit_numeric_transform(c.series, train);
  for (std::size_t k : {0u, 1u, 2u, 4u}) {
    EXPECT_EQ(a.stats[k].mean, direct.stats[k].mean);
    EXPECT_NE(a.stats[k].mean, b.stats[k].mean);
  }
}

TEST(EncodeTweet, DimensionContract) {
  for (std::size_t dim : {768u, 1024u}) {
    const auto series = corpus::SeriesCorpus{series_of("s", 2)};
    const auto store = store_for(series, dim);
    Rng rng(3);
    const auto params = FusionParams::create(32, rng);
    const auto v = encode_tweet(series[0].tweets[0], store, identity_transform(), params);
    EXPECT_EQ(v.size(), static_cast<Eigen::Index>(dim + 32));
    const auto text = store.lookup(series[0].tweets[0].id);
    for (std::size_t k = 0; k < dim; ++k) EXPECT_EQ(v[static_cast<Eigen::Index>(k)], text[k]);
  }
}

TEST(EncodeTweet, ZeroProjectionGivesZeroTail) {
  const auto series = corpus::SeriesCorpus{series_of("s", 1)};
  const auto store = store_for(series, 8);
  Rng rng(3);
  auto params = FusionParams::create(32, rng);
  params.params.value("projection.weight").setZero();
  params.params.value("projection.bias").setZero();
  const auto v = encode_tweet(series[0].tweets[0], store, identity_transform(), params);
  EXPECT_TRUE(v.tail(32).isZero(0.0));
}

TEST(EncodeTweet, MissingEmbeddingNamesId) {
  const auto s = series_of("s", 1);
  EmbeddingStore store(4);
  Rng rng(3);
  const auto params = FusionParams::create(4, rng);
  std::string msg;
  EXPECT_EQ(testutil::error_kind([&] { encode_tweet(s.tweets[0], store, identity_transform(), params); }, &msg),
            ErrorKind::lookup);
  EXPECT_NE(msg.find(s.tweets[0].id), std::string::npos);
}

TEST(EncodeTweet, Deterministic) {
  const auto series = corpus::SeriesCorpus{series_of("s", 3)};
  const auto store = store_for(series, 16);
  Rng r1(9), r2(9);
  const auto p1 = FusionParams::create(32, r1);
  const auto p2 = FusionParams::create(32, r2);
  const auto t = fit_numeric_transform(series[0].tweets);
  for (const auto& tw : series[0].tweets) {
    const Vector a = encode_tweet(tw, store, t, p1);
    const Vector b = encode_tweet(tw, store, t, p2);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
  }
}

TEST(BuildSeriesInput, PaddingMask) {
  const auto series = corpus::SeriesCorpus{series_of("s", 3)};
  const auto store = store_for(series, 6);
  Rng rng(1);
  const auto params = FusionParams::create(4, rng);
  const auto in = build_series_input(series[0], 5, store, identity_transform(), params);
  EXPECT_EQ(in.rows.rows(), 5);
  EXPECT_EQ(in.rows.cols(), 10);
  EXPECT_EQ(in.mask, (Vector(5) << 1, 1, 1, 0, 0).finished());
  EXPECT_TRUE(in.rows.bottomRows(2).isZero(0.0));
  for (Eigen::Index j = 0; j < 3; ++j) {
    const Vector row = in.rows.row(j).transpose();
    const Vector expect = encode_tweet(series[0].tweets[static_cast<std::size_t>(j)], store, identity_transform(), params);
    EXPECT_EQ(row, expect);
  }
}

TEST(BuildSeriesInput, TruncationKeepsEarliest) {
  auto s = series_of("s", 40);
  Rng rng(4);
  for (auto& t : s.tweets) t.delta_t = std::floor(rng.uniform(0, 1000));
  std::vector<Tweet> by_time = s.tweets;
  std::stable_sort(s.tweets.begin(), s.tweets.end(), [](const Tweet& a, const Tweet& b) { return a.delta_t < b.delta_t; });
  const auto store = store_for({s}, 3);
  const auto f = series_features(s, 5, store, identity_transform());
  std::stable_sort(by_time.begin(), by_time.end(),
                   [](const Tweet& a, const Tweet& b) { return a.delta_t < b.delta_t; });
  for (Eigen::Index j = 0; j < 5; ++j) {
    const auto e = store.lookup(by_time[static_cast<std::size_t>(j)].id);
    for (Eigen::Index k = 0; k < 3; ++k) EXPECT_EQ(f.text(j, k), e[static_cast<std::size_t>(k)]);
  }
  EXPECT_EQ(f.mask.sum(), 5.0);
}

TEST(BuildSeriesInput, LengthOneIsSourceTweet) {
  const auto series = corpus::SeriesCorpus{series_of("s", 4)};
  const auto store = store_for(series, 3);
  const auto f = series_features(series[0], 1, store, identity_transform());
  ASSERT_EQ(f.text.rows(), 1);
  const auto e = store.lookup(series[0].tweets[0].id);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_EQ(f.text(0, k), e[static_cast<std::size_t>(k)]);
  EXPECT_EQ(f.mask(0), 1.0);
}

namespace {

FusionParams gated(Eigen::Index dim, Eigen::Index width, std::uint64_t seed) {
  Rng rng(seed);
  return FusionParams::create_gated(4, dim, dim, width, rng);
}

Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal() * scale;
  return v;
}

}  // namespace

TEST(GatedFusion, SaturatedGateSelectsTextBranch) {
  auto p = gated(5, 5, 3);
  p.params.value("gate.gate.weight").setZero();
  p.params.value("gate.gate.bias").setConstant(1000.0);
  Rng rng(6);
  const auto out = gated_fusion(random_vector(5, rng), random_vector(5, rng), p);
  EXPECT_EQ(out.z, Vector::Ones(5));
  EXPECT_EQ(out.h, out.a);
}

TEST(GatedFusion, EqualBranchesAreFixedPoint) {
  auto p = gated(4, 4, 5);
  p.params.value("gate.engagement.weight") = p.params.value("gate.text.weight");
  p.params.value("gate.engagement.bias") = p.params.value("gate.text.bias");
  Rng rng(2);
  const Vector x = random_vector(4, rng);
  const auto out = gated_fusion(x, x, p);
  EXPECT_EQ(out.a, out.b);
  for (Eigen::Index d = 0; d < 4; ++d) EXPECT_NEAR(out.h[d], out.a[d], 1e-15);
}

TEST(GatedFusion, ConvexityOverRandomDraws) {
  Rng rng(77);
  for (int draw = 0; draw < 1000; ++draw) {
    const auto p = gated(6, 6, rng.next());
    const auto out = gated_fusion(random_vector(6, rng, 3.0), random_vector(6, rng, 3.0), p);
    for (Eigen::Index d = 0; d < 6; ++d) {
      ASSERT_GE(out.z[d], 0.0);
      ASSERT_LE(out.z[d], 1.0);
      ASSERT_GE(out.h[d], std::min(out.a[d], out.b[d]) - 1e-15);
      ASSERT_LE(out.h[d], std::max(out.a[d], out.b[d]) + 1e-15);
    }
  }
}

TEST(GatedFusion, WidthMismatchIsConfigError) {
  const auto p = gated(4, 4, 1);
  EXPECT_EQ(testutil::error_kind([&] { gated_fusion(Vector::Zero(5), Vector::Zero(4), p); }), ErrorKind::config);
}

TEST(SourceFeature, ConcatLength) {
  EXPECT_EQ(concat_with_source_feature(Vector::Zero(1536), Vector::Ones(1)).size(), 1537);
  const Vector v = concat_with_source_feature((Vector(2) << 1, 2).finished(), (Vector(1) << 3).finished());
  EXPECT_EQ(v, (Vector(3) << 1, 2, 3).finished());
}

namespace {

corpus::Article article(const std::string& id, const std::string& source, std::int64_t e) {
  corpus::Article a;
  a.id = id;
  a.title = "t";
  a.description = "d";
  a.source = source;
  a.engagement = e;
  return a;
}

}  // namespace

TEST(SourceFeature, MeanLogEngagement) {
  const corpus::ArticleCorpus arts = {article("a", "x", 9), article("b", "x", 99), article("c", "y", 0)};
  const std::vector<std::size_t> rows = {0, 1, 2};
  const auto se = fit_source_engagement(arts, rows);
  EXPECT_NEAR(se.lookup("x"), (std::log(10.0) + std::log(100.0)) / 2, 1e-15);
}

TEST(SourceFeature, UnseenSourceFallsBack) {
  const corpus::ArticleCorpus arts = {article("a", "x", 9), article("b", "x", 99), article("c", "new", 5)};
  const std::vector<std::size_t> rows = {0, 1};
  const auto se = fit_source_engagement(arts, rows);
  bool unknown = false;
  EXPECT_EQ(se.lookup("new", &unknown), se.global_mean_log);
  EXPECT_TRUE(unknown);
  const auto vocab = fit_source_vocabulary(arts, rows);
  EXPECT_EQ(vocab.lookup("new", &unknown), 0);
  EXPECT_TRUE(unknown);
  EXPECT_GT(vocab.lookup("x"), 0);

  EmbeddingStore store(2);
  for (const auto& a : arts) {
    store.insert(corpus::title_key(a), std::vector<double>{1, 2});
    store.insert(corpus::description_key(a), std::vector<double>{3, 4});
  }
  const auto data = EncodedDataset::from_articles(arts, store, rows);
  EXPECT_EQ(data.unknown_source_rows(), (std::vector<std::size_t>{2}));
  EXPECT_EQ(data.text_dim(), 4u);
}

TEST(EncodedDataset, SeriesBatchIsTimeMajor) {
  const corpus::SeriesCorpus series = {series_of("a", 2), series_of("b", 3)};
  const auto store = store_for(series, 3);
  const std::vector<std::size_t> rows = {0, 1};
  const auto data = EncodedDataset::from_series(series, store, rows, 3);
  const auto b = data.batch(rows);
  EXPECT_EQ(b.size, 2);
  EXPECT_EQ(b.length, 3);
  EXPECT_EQ(b.text.rows(), 6);
  // Row t * B + b.
  const auto e = store.lookup(series[1].tweets[2].id);
  EXPECT_EQ(b.text(2 * 2 + 1, 0), e[0]);
  EXPECT_EQ(b.mask(0, 2), 0.0);
  EXPECT_EQ(b.mask(1, 2), 1.0);
  EXPECT_TRUE(b.text.row(2 * 2 + 0).isZero(0.0));
}
