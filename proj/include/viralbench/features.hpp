#pragma once

#include "viralbench/corpus.hpp"
#include "viralbench/embedding_store.hpp"
#include "viralbench/nn.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace viralbench::features {

using ag::Matrix;
using ag::Vector;

/// Per-tweet numeric signals, in this order.
inline constexpr std::size_t kNumericFeatures = 5;
inline constexpr std::array<const char*, kNumericFeatures> kNumericFeatureNames = {"delta_t", "followers", "following",
                                                                                  "verified", "likes"};

struct FeatureStats {
  double mean = 0.0;
  double stddev = 1.0;
  bool constant = false;
};

/// log(1+x) standardization for delta_t, followers, following and likes;
/// verified passes through.
struct NumericTransform {
  std::array<FeatureStats, kNumericFeatures> stats{};  // slot 3 (verified) unused
  std::vector<std::string> diagnostics;
  std::size_t fitted_on = 0;
};

NumericTransform fit_numeric_transform(std::span<const corpus::Tweet> tweets);
/// Fits on every tweet of the selected series.
NumericTransform fit_numeric_transform(const corpus::SeriesCorpus& series, std::span<const std::size_t> rows);

std::array<double, kNumericFeatures> apply_numeric_transform(const NumericTransform& t, const corpus::Tweet& tweet);

/// Learned affine map from the 5 numeric features to a dense vector.
class NumericProjection {
 public:
  NumericProjection() = default;
  NumericProjection(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index out_dim, Rng& rng);

  ag::Var apply(ag::Graph& g, const nn::Bound& p, ag::Var numeric) const { return linear_(g, p, numeric); }
  Eigen::Index out_dim() const { return linear_.out; }
  const nn::Linear& linear() const { return linear_; }

 private:
  nn::Linear linear_;
};

/// Gated multimodal unit: a = tanh(W_t x), b = tanh(W_e e),
/// z = sigmoid(W_z [x ; e]), h = z * a + (1 - z) * b.
class GatedFusion {
 public:
  struct Parts {
    ag::Var a, b, z, h;
  };

  GatedFusion() = default;
  GatedFusion(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index text_dim, Eigen::Index engagement_dim,
              Eigen::Index width, Rng& rng);

  Parts apply_parts(ag::Graph& g, const nn::Bound& p, ag::Var text, ag::Var engagement) const;
  ag::Var apply(ag::Graph& g, const nn::Bound& p, ag::Var text, ag::Var engagement) const {
    return apply_parts(g, p, text, engagement).h;
  }
  Eigen::Index width() const { return text_branch_.out; }
  const nn::Linear& text_branch() const { return text_branch_; }
  const nn::Linear& engagement_branch() const { return engagement_branch_; }
  const nn::Linear& gate() const { return gate_; }

 private:
  nn::Linear text_branch_;
  nn::Linear engagement_branch_;
  nn::Linear gate_;
};

/// Stand-alone projection (and optional gate) parameters for encoding outside
/// a model.
struct FusionParams {
  nn::ParameterSet params;
  NumericProjection projection;
  std::optional<GatedFusion> gate;

  static FusionParams create(Eigen::Index projection_dim, Rng& rng);
  static FusionParams create_gated(Eigen::Index projection_dim, Eigen::Index text_dim, Eigen::Index engagement_dim,
                                   Eigen::Index width, Rng& rng);
};

/// [text embedding ; projection(transformed numerics)], length dim + projection width.
Vector encode_tweet(const corpus::Tweet& tweet, const EmbeddingStore& store, const NumericTransform& transform,
                    const FusionParams& params);

struct GatedOutput {
  Vector a, b, z, h;
};
GatedOutput gated_fusion(const Vector& text, const Vector& engagement, const FusionParams& params);

/// Raw per-step inputs for one series, truncated/padded to `length` steps.
/// Truncation keeps the earliest tweets; padded rows are zero with mask 0.
struct SeriesFeatures {
  Matrix text;     // length x dim
  Matrix numeric;  // length x 5, transformed
  Vector mask;     // length
};

SeriesFeatures series_features(const corpus::TweetSeries& series, std::size_t length, const EmbeddingStore& store,
                               const NumericTransform& transform);

struct SeriesInput {
  Matrix rows;  // length x (dim + projection width)
  Vector mask;
};

SeriesInput build_series_input(const corpus::TweetSeries& series, std::size_t length, const EmbeddingStore& store,
                               const NumericTransform& transform, const FusionParams& params);

/// Source vocabulary fitted on training articles; index 0 is the unknown source.
struct SourceVocabulary {
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(index.size()) + 1; }
  int lookup(const std::string& source, bool* unknown = nullptr) const;
};

SourceVocabulary fit_source_vocabulary(const corpus::ArticleCorpus& articles, std::span<const std::size_t> rows);

/// Mean log(1+engagement) per source over training articles, with the global
/// training mean as the fallback for unseen sources.
struct SourceEngagement {
  std::unordered_map<std::string, double> mean_log;
  double global_mean_log = 0.0;

  double lookup(const std::string& source, bool* unknown = nullptr) const;
};

SourceEngagement fit_source_engagement(const corpus::ArticleCorpus& articles, std::span<const std::size_t> rows);

Vector concat_with_source_feature(const Vector& text, const Vector& feature);

/// Model-ready mini-batch. Article batches are B x D; series batches are
/// time-major, row t * B + b.
struct Batch {
  Eigen::Index size = 0;
  Eigen::Index length = 0;  // 0 for article batches
  Matrix text;
  Matrix numeric;
  Matrix mask;  // B x length
  std::vector<int> source;
  Matrix engagement;  // B x 1
};

/// Article and series items encoded for one fold.
class EncodedDataset {
 public:
  static EncodedDataset from_articles(const corpus::ArticleCorpus& articles, const EmbeddingStore& store,
                                      std::span<const std::size_t> train_rows);
  static EncodedDataset from_series(const corpus::SeriesCorpus& series, const EmbeddingStore& store,
                                    std::span<const std::size_t> train_rows, std::size_t length);

  corpus::CorpusShape shape() const { return shape_; }
  std::size_t size() const { return count_; }
  std::size_t length() const { return length_; }
  std::size_t text_dim() const { return text_dim_; }
  int source_count() const { return vocabulary_.size(); }
  const NumericTransform& transform() const { return transform_; }
  /// Items whose source was unseen in the training rows.
  const std::vector<std::size_t>& unknown_source_rows() const { return unknown_sources_; }

  Batch batch(std::span<const std::size_t> rows) const;

  /// Fixed-length vectors for classical baselines: article text, or the mean of
  /// the unmasked per-tweet [text ; numeric] rows restricted to the view.
  Matrix flat(std::span<const std::size_t> rows, bool use_text, bool use_numeric) const;

 private:
  corpus::CorpusShape shape_ = corpus::CorpusShape::article;
  std::size_t count_ = 0;
  std::size_t length_ = 0;
  std::size_t text_dim_ = 0;
  Matrix article_text_;
  std::vector<int> source_;
  Vector engagement_;
  std::vector<SeriesFeatures> series_;
  NumericTransform transform_;
  SourceVocabulary vocabulary_;
  std::vector<std::size_t> unknown_sources_;
};

}  // namespace viralbench::features
