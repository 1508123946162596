#include "viralbench/features.hpp"

#include <cmath>

namespace viralbench::features {

namespace {

constexpr std::array<std::size_t, 4> kTransformed = {0, 1, 2, 4};

double raw_feature(const corpus::Tweet& t, std::size_t k) {
  switch (k) {
    case 0:
      return t.delta_t;
    case 1:
      return static_cast<double>(t.followers);
    case 2:
      return static_cast<double>(t.following);
    case 3:
      return t.verified ? 1.0 : 0.0;
    default:
      return static_cast<double>(t.likes);
  }
}

}  // namespace

NumericTransform fit_numeric_transform(std::span<const corpus::Tweet> tweets) {
  if (tweets.empty()) throw validation_error("cannot fit a numeric transform on zero tweets");
  NumericTransform t;
  t.fitted_on = tweets.size();
  const auto n = static_cast<double>(tweets.size());
  for (std::size_t k : kTransformed) {
    double sum = 0.0;
    for (const auto& tw : tweets) sum += std::log1p(raw_feature(tw, k));
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& tw : tweets) {
      const double d = std::log1p(raw_feature(tw, k)) - mean;
      sq += d * d;
    }
    const double stddev = std::sqrt(sq / n);
    FeatureStats& s = t.stats[k];
    s.mean = mean;
    if (stddev > 1e-12) {
      s.stddev = stddev;
    } else {
      s.stddev = 1.0;
      s.constant = true;
      t.diagnostics.push_back(std::string("constant feature '") + kNumericFeatureNames[k] + "'; std set to 1");
    }
  }
  return t;
}

NumericTransform fit_numeric_transform(const corpus::SeriesCorpus& series, std::span<const std::size_t> rows) {
  std::vector<corpus::Tweet> tweets;
  for (std::size_t r : rows) tweets.insert(tweets.end(), series[r].tweets.begin(), series[r].tweets.end());
  return fit_numeric_transform(tweets);
}

std::array<double, kNumericFeatures> apply_numeric_transform(const NumericTransform& t, const corpus::Tweet& tweet) {
  std::array<double, kNumericFeatures> out{};
  for (std::size_t k : kTransformed) {
    out[k] = (std::log1p(raw_feature(tweet, k)) - t.stats[k].mean) / t.stats[k].stddev;
  }
  out[3] = tweet.verified ? 1.0 : 0.0;
  return out;
}

NumericProjection::NumericProjection(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index out_dim, Rng& rng)
    : linear_(ps, prefix, static_cast<Eigen::Index>(kNumericFeatures), out_dim, rng) {}

GatedFusion::GatedFusion(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index text_dim,
                         Eigen::Index engagement_dim, Eigen::Index width, Rng& rng)
    : text_branch_(ps, prefix + ".text", text_dim, width, rng),
      engagement_branch_(ps, prefix + ".engagement", engagement_dim, width, rng),
      gate_(ps, prefix + ".gate", text_dim + engagement_dim, width, rng) {}

GatedFusion::Parts GatedFusion::apply_parts(ag::Graph& g, const nn::Bound& p, ag::Var text,
                                            ag::Var engagement) const {
  if (g.value(text).cols() != text_branch_.in || g.value(engagement).cols() != engagement_branch_.in) {
    throw config_error("gated fusion: input width does not match configured branch widths");
  }
  Parts parts;
  parts.a = ag::tanh(g, text_branch_(g, p, text));
  parts.b = ag::tanh(g, engagement_branch_(g, p, engagement));
  const ag::Var joint[] = {text, engagement};
  parts.z = ag::sigmoid(g, gate_(g, p, ag::concat_cols(g, joint)));
  parts.h = ag::add(g, ag::mul(g, parts.z, parts.a), ag::mul(g, ag::one_minus(g, parts.z), parts.b));
  return parts;
}

FusionParams FusionParams::create(Eigen::Index projection_dim, Rng& rng) {
  FusionParams f;
  f.projection = NumericProjection(f.params, "projection", projection_dim, rng);
  return f;
}

FusionParams FusionParams::create_gated(Eigen::Index projection_dim, Eigen::Index text_dim,
                                        Eigen::Index engagement_dim, Eigen::Index width, Rng& rng) {
  FusionParams f = create(projection_dim, rng);
  f.gate = GatedFusion(f.params, "gate", text_dim, engagement_dim, width, rng);
  return f;
}

namespace {

Matrix row_of(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

Vector encode_tweet(const corpus::Tweet& tweet, const EmbeddingStore& store, const NumericTransform& transform,
                    const FusionParams& params) {
  const auto text = store.lookup(tweet.id);
  const auto numeric = apply_numeric_transform(transform, tweet);
  ag::Graph g(false);
  const nn::Bound p = params.params.bind(g);
  const ag::Var parts[] = {g.constant(row_of(text)),
                           params.projection.apply(g, p, g.constant(row_of(numeric)))};
  return as_vector(g.value(ag::concat_cols(g, parts)));
}

GatedOutput gated_fusion(const Vector& text, const Vector& engagement, const FusionParams& params) {
  if (!params.gate) throw config_error("gated_fusion: parameters have no gate");
  ag::Graph g(false);
  const nn::Bound p = params.params.bind(g);
  const auto parts = params.gate->apply_parts(g, p, g.constant(text.transpose()), g.constant(engagement.transpose()));
  return {as_vector(g.value(parts.a)), as_vector(g.value(parts.b)), as_vector(g.value(parts.z)),
          as_vector(g.value(parts.h))};
}

SeriesFeatures series_features(const corpus::TweetSeries& series, std::size_t length, const EmbeddingStore& store,
                               const NumericTransform& transform) {
  if (length < 1) throw config_error("series length must be >= 1");
  const auto dim = static_cast<Eigen::Index>(store.dim());
  const auto len = static_cast<Eigen::Index>(length);
  SeriesFeatures f;
  f.text = Matrix::Zero(len, dim);
  f.numeric = Matrix::Zero(len, static_cast<Eigen::Index>(kNumericFeatures));
  f.mask = Vector::Zero(len);
  // tweets are kept sorted by delta_t, so the prefix is the earliest tweets
  const std::size_t used = std::min(length, series.tweets.size());
  for (std::size_t j = 0; j < used; ++j) {
    const auto& tw = series.tweets[j];
    const auto emb = store.lookup(tw.id);
    const auto row = static_cast<Eigen::Index>(j);
    for (Eigen::Index k = 0; k < dim; ++k) f.text(row, k) = emb[static_cast<std::size_t>(k)];
    const auto num = apply_numeric_transform(transform, tw);
    for (std::size_t k = 0; k < kNumericFeatures; ++k) f.numeric(row, static_cast<Eigen::Index>(k)) = num[k];
    f.mask[row] = 1.0;
  }
  return f;
}

SeriesInput build_series_input(const corpus::TweetSeries& series, std::size_t length, const EmbeddingStore& store,
                               const NumericTransform& transform, const FusionParams& params) {
  const SeriesFeatures f = series_features(series, length, store, transform);
  ag::Graph g(false);
  const nn::Bound p = params.params.bind(g);
  const ag::Var parts[] = {g.constant(f.text), params.projection.apply(g, p, g.constant(f.numeric))};
  SeriesInput out;
  out.rows = g.value(ag::concat_cols(g, parts));
  for (Eigen::Index r = 0; r < out.rows.rows(); ++r) {
    if (f.mask[r] == 0.0) out.rows.row(r).setZero();
  }
  out.mask = f.mask;
  return out;
}

int SourceVocabulary::lookup(const std::string& source, bool* unknown) const {
  auto it = index.find(source);
  if (unknown) *unknown = it == index.end();
  return it == index.end() ? 0 : it->second;
}

SourceVocabulary fit_source_vocabulary(const corpus::ArticleCorpus& articles, std::span<const std::size_t> rows) {
  SourceVocabulary v;
  for (std::size_t r : rows) {
    const auto& s = articles[r].source;
    if (!v.index.count(s)) v.index.emplace(s, static_cast<int>(v.index.size()) + 1);
  }
  return v;
}

double SourceEngagement::lookup(const std::string& source, bool* unknown) const {
  auto it = mean_log.find(source);
  if (unknown) *unknown = it == mean_log.end();
  return it == mean_log.end() ? global_mean_log : it->second;
}

SourceEngagement fit_source_engagement(const corpus::ArticleCorpus& articles, std::span<const std::size_t> rows) {
  SourceEngagement out;
  std::unordered_map<std::string, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  for (std::size_t r : rows) {
    const double v = std::log1p(static_cast<double>(articles[r].engagement));
    auto& slot = acc[articles[r].source];
    slot.first += v;
    slot.second += 1;
    total += v;
  }
  for (const auto& [src, sum_count] : acc) {
    out.mean_log[src] = sum_count.first / static_cast<double>(sum_count.second);
  }
  out.global_mean_log = rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
  return out;
}

Vector concat_with_source_feature(const Vector& text, const Vector& feature) {
  Vector out(text.size() + feature.size());
  out << text, feature;
  return out;
}

EncodedDataset EncodedDataset::from_articles(const corpus::ArticleCorpus& articles, const EmbeddingStore& store,
                                             std::span<const std::size_t> train_rows) {
  EncodedDataset ds;
  ds.shape_ = corpus::CorpusShape::article;
  ds.count_ = articles.size();
  ds.text_dim_ = 2 * store.dim();
  const auto d = static_cast<Eigen::Index>(store.dim());
  ds.article_text_.resize(static_cast<Eigen::Index>(articles.size()), 2 * d);
  ds.vocabulary_ = fit_source_vocabulary(articles, train_rows);
  const SourceEngagement engagement = fit_source_engagement(articles, train_rows);
  ds.engagement_.resize(static_cast<Eigen::Index>(articles.size()));
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto title = store.lookup(corpus::title_key(articles[i]));
    const auto desc = store.lookup(corpus::description_key(articles[i]));
    for (Eigen::Index k = 0; k < d; ++k) {
      ds.article_text_(row, k) = title[static_cast<std::size_t>(k)];
      ds.article_text_(row, d + k) = desc[static_cast<std::size_t>(k)];
    }
    bool unknown = false;
    ds.source_.push_back(ds.vocabulary_.lookup(articles[i].source, &unknown));
    if (unknown) ds.unknown_sources_.push_back(i);
    ds.engagement_[row] = engagement.lookup(articles[i].source);
  }
  return ds;
}

EncodedDataset EncodedDataset::from_series(const corpus::SeriesCorpus& series, const EmbeddingStore& store,
                                           std::span<const std::size_t> train_rows, std::size_t length) {
  EncodedDataset ds;
  ds.shape_ = corpus::CorpusShape::series;
  ds.count_ = series.size();
  ds.length_ = length;
  ds.text_dim_ = store.dim();
  ds.transform_ = fit_numeric_transform(series, train_rows);
  ds.series_.reserve(series.size());
  for (const auto& s : series) ds.series_.push_back(series_features(s, length, store, ds.transform_));
  return ds;
}

Batch EncodedDataset::batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.size = static_cast<Eigen::Index>(rows.size());
  if (shape_ == corpus::CorpusShape::article) {
    b.text.resize(b.size, article_text_.cols());
    b.engagement.resize(b.size, 1);
    for (Eigen::Index i = 0; i < b.size; ++i) {
      const std::size_t r = rows[static_cast<std::size_t>(i)];
      b.text.row(i) = article_text_.row(static_cast<Eigen::Index>(r));
      b.source.push_back(source_[r]);
      b.engagement(i, 0) = engagement_[static_cast<Eigen::Index>(r)];
    }
    return b;
  }
  const auto len = static_cast<Eigen::Index>(length_);
  b.length = len;
  b.text.resize(len * b.size, static_cast<Eigen::Index>(text_dim_));
  b.numeric.resize(len * b.size, static_cast<Eigen::Index>(kNumericFeatures));
  b.mask.resize(b.size, len);
  for (Eigen::Index i = 0; i < b.size; ++i) {
    const SeriesFeatures& f = series_[rows[static_cast<std::size_t>(i)]];
    for (Eigen::Index t = 0; t < len; ++t) {
      b.text.row(t * b.size + i) = f.text.row(t);
      b.numeric.row(t * b.size + i) = f.numeric.row(t);
      b.mask(i, t) = f.mask[t];
    }
  }
  return b;
}

Matrix EncodedDataset::flat(std::span<const std::size_t> rows, bool use_text, bool use_numeric) const {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (shape_ == corpus::CorpusShape::article) {
    Matrix out(n, article_text_.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = article_text_.row(static_cast<Eigen::Index>(rows[i]));
    return out;
  }
  const Eigen::Index tw = use_text ? static_cast<Eigen::Index>(text_dim_) : 0;
  const Eigen::Index nw = use_numeric ? static_cast<Eigen::Index>(kNumericFeatures) : 0;
  Matrix out = Matrix::Zero(n, tw + nw);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SeriesFeatures& f = series_[rows[static_cast<std::size_t>(i)]];
    const double count = f.mask.sum();
    for (Eigen::Index t = 0; t < f.mask.size(); ++t) {
      if (f.mask[t] == 0.0) continue;
      if (tw) out.row(i).head(tw) += f.text.row(t);
      if (nw) out.row(i).tail(nw) += f.numeric.row(t);
    }
    out.row(i) /= count;
  }
  return out;
}

}  // namespace viralbench::features
