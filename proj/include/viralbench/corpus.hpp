#pragma once

#include "viralbench/embedding_store.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace viralbench::corpus {

enum class Task { veracity, virality };
enum class CorpusShape { article, series };

std::string to_string(Task t);
Task parse_task(const std::string& s);
std::string to_string(CorpusShape s);
CorpusShape parse_shape(const std::string& s);

/// A news item with aggregate engagement (shares + likes + comments).
struct Article {
  std::string id;
  std::string title;
  std::string description;
  std::string source;
  std::int64_t engagement = 0;
  std::optional<int> veracity;  // 1 = fake
};

struct Tweet {
  std::string id;
  std::string text;
  double delta_t = 0.0;  // seconds since the first tweet of the series
  std::int64_t followers = 0;
  std::int64_t following = 0;
  bool verified = false;
  std::int64_t likes = 0;
};

/// Tweets about one story, ordered by delta_t with tweets[0].delta_t == 0.
struct TweetSeries {
  std::string id;
  std::vector<Tweet> tweets;
  std::optional<int> veracity;  // 1 = fake

  std::int64_t total_likes() const;
};

using ArticleCorpus = std::vector<Article>;
using SeriesCorpus = std::vector<TweetSeries>;

/// Embedding-store keys of an article's two text fields.
std::string title_key(const Article& a);
std::string description_key(const Article& a);

struct LoadOptions {
  /// Accept descriptions that are empty after trimming.
  bool allow_empty_description = false;
};

// Article file: one JSON object per line with fields id, title, description,
// source, engagement and optional veracity. Unknown fields produce warnings.
ArticleCorpus parse_articles(std::istream& in, const LoadOptions& options = {},
                             std::vector<std::string>* warnings = nullptr);
ArticleCorpus load_articles(const std::filesystem::path& path, const LoadOptions& options = {},
                            std::vector<std::string>* warnings = nullptr);
void write_articles(std::ostream& out, const ArticleCorpus& articles);

// Series file: one JSON object per line, {id, veracity?, tweets: [{id, text,
// timestamp, followers, following, verified, likes}]}; timestamps are epoch
// seconds and are replaced by delays from the earliest tweet.
SeriesCorpus parse_tweet_series(std::istream& in, std::vector<std::string>* warnings = nullptr);
SeriesCorpus load_tweet_series(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
/// Canonical form: timestamps written as delta_t.
void write_tweet_series(std::ostream& out, const SeriesCorpus& series);

/// Sorts, then subtracts the earliest value.
std::vector<double> normalize_timestamps(std::span<const double> raw);

struct Violation {
  std::string item_id;
  std::string rule;
  std::string detail;
};
using ValidationReport = std::vector<Violation>;

ValidationReport validate_corpus(const ArticleCorpus& articles, const LoadOptions& options = {});
ValidationReport validate_corpus(const SeriesCorpus& series);
/// One tab-separated (item_id, rule, detail) line per violation.
std::string format_report(const ValidationReport& report);

enum class SignalPlacement { every_tweet, first_tweet };

/// Recipe for a corpus with planted, tunable signal.
struct SyntheticSpec {
  std::size_t n_items = 1000;
  Task task = Task::veracity;
  CorpusShape shape = CorpusShape::article;
  double positive_rate = 0.5;
  double text_signal_strength = 1.0;
  double numeric_signal_strength = 1.0;
  std::size_t embedding_dim = 16;
  std::size_t min_length = 1;
  std::size_t max_length = 10;
  std::uint64_t seed = 0;
  /// Series only: which tweets carry the label signal. With first_tweet only
  /// the source tweet accrues likes.
  SignalPlacement placement = SignalPlacement::every_tweet;
  /// Article only: number of distinct sources, 0 picks max(4, n/50).
  std::size_t n_sources = 0;

  void validate() const;
};

struct SyntheticCorpus {
  ArticleCorpus articles;  // filled for CorpusShape::article
  SeriesCorpus series;     // filled for CorpusShape::series
  EmbeddingStore store;
  std::vector<int> truth;  // planted label per item, corpus order
};

/// Deterministic in spec (including seed). Text embeddings are Gaussian with
/// class means separated by text_signal_strength along a random unit
/// direction; numeric signals shift with the label by numeric_signal_strength.
/// Exactly round(positive_rate * n) items carry the positive planted label.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace viralbench::corpus
