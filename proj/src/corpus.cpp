#include "viralbench/corpus.hpp"

#include "viralbench/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace viralbench::corpus {

using nlohmann::json;

std::string to_string(Task t) { return t == Task::veracity ? "veracity" : "virality"; }

Task parse_task(const std::string& s) {
  if (s == "veracity") return Task::veracity;
  if (s == "virality") return Task::virality;
  throw config_error("unknown task '" + s + "' (expected veracity or virality)");
}

std::string to_string(CorpusShape s) { return s == CorpusShape::article ? "article" : "series"; }

CorpusShape parse_shape(const std::string& s) {
  if (s == "article") return CorpusShape::article;
  if (s == "series") return CorpusShape::series;
  throw config_error("unknown corpus shape '" + s + "' (expected article or series)");
}

std::int64_t TweetSeries::total_likes() const {
  std::int64_t total = 0;
  for (const auto& t : tweets) total += t.likes;
  return total;
}

std::string title_key(const Article& a) { return a.id + "/title"; }
std::string description_key(const Article& a) { return a.id + "/description"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string where(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

std::string id_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) throw parse_error(std::string("missing field '") + key + "'" + where(line));
  const json& v = obj.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw parse_error(std::string("field '") + key + "' must be a string" + where(line));
}

std::string string_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) throw parse_error(std::string("missing field '") + key + "'" + where(line));
  if (!obj.at(key).is_string()) throw parse_error(std::string("field '") + key + "' must be a string" + where(line));
  return obj.at(key).get<std::string>();
}

std::int64_t count_field(const json& obj, const char* key, const std::string& item, std::size_t line) {
  if (!obj.contains(key)) throw parse_error(std::string("missing field '") + key + "'" + where(line));
  const json& v = obj.at(key);
  std::int64_t out;
  if (v.is_number_integer()) {
    out = v.get<std::int64_t>();
  } else if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) {
    out = static_cast<std::int64_t>(v.get<double>());
  } else {
    throw parse_error(std::string("field '") + key + "' must be an integer" + where(line));
  }
  if (out < 0) {
    throw validation_error(std::string("field '") + key + "' is negative (" + std::to_string(out) + ") for '" + item +
                           "'" + where(line));
  }
  return out;
}

std::optional<int> veracity_field(const json& obj, std::size_t line) {
  if (!obj.contains("veracity") || obj.at("veracity").is_null()) return std::nullopt;
  const json& v = obj.at("veracity");
  if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
  if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>();
  throw parse_error("field 'veracity' must be 0, 1 or null" + where(line));
}

bool bool_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) throw parse_error(std::string("missing field '") + key + "'" + where(line));
  const json& v = obj.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>() == 1;
  throw parse_error(std::string("field '") + key + "' must be boolean or 0/1" + where(line));
}

double timestamp_field(const json& obj, std::size_t line) {
  if (!obj.contains("timestamp")) throw parse_error("missing field 'timestamp'" + where(line));
  const json& v = obj.at("timestamp");
  if (v.is_number()) {
    const double t = v.get<double>();
    if (std::isfinite(t)) return t;
  } else if (v.is_string()) {
    const std::string s = v.get<std::string>();
    std::size_t used = 0;
    try {
      const double t = std::stod(s, &used);
      if (used == s.size() && std::isfinite(t)) return t;
    } catch (const std::exception&) {
    }
  }
  throw parse_error("unparseable timestamp" + where(line));
}

void warn_unknown(const json& obj, const std::set<std::string>& known, const std::string& what, std::size_t line,
                  std::vector<std::string>* warnings) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (known.count(it.key())) continue;
    std::string msg = "ignoring unknown " + what + " field '" + it.key() + "'" + where(line);
    if (warnings) {
      warnings->push_back(std::move(msg));
    } else {
      std::cerr << "warning: " << msg << '\n';
    }
  }
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    json obj = json::parse(text);
    if (!obj.is_object()) throw parse_error("record is not an object" + where(line));
    return obj;
  } catch (const json::exception& e) {
    throw parse_error(std::string("malformed record: ") + e.what() + where(line));
  }
}

}  // namespace

ArticleCorpus parse_articles(std::istream& in, const LoadOptions& options, std::vector<std::string>* warnings) {
  static const std::set<std::string> known = {"id", "title", "description", "source", "engagement", "veracity"};
  ArticleCorpus out;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    const json obj = parse_line(text, line);
    warn_unknown(obj, known, "article", line, warnings);
    Article a;
    a.id = id_field(obj, "id", line);
    a.title = string_field(obj, "title", line);
    a.description = string_field(obj, "description", line);
    a.source = id_field(obj, "source", line);
    a.engagement = count_field(obj, "engagement", a.id, line);
    a.veracity = veracity_field(obj, line);
    if (trim(a.title).empty()) throw validation_error("field 'title' is empty for '" + a.id + "'" + where(line));
    if (!options.allow_empty_description && trim(a.description).empty()) {
      throw validation_error("field 'description' is empty for '" + a.id + "'" + where(line));
    }
    if (!seen.insert(a.id).second) throw integrity_error("duplicate article id '" + a.id + "'" + where(line));
    out.push_back(std::move(a));
  }
  return out;
}

ArticleCorpus load_articles(const std::filesystem::path& path, const LoadOptions& options,
                            std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open article file " + path.string());
  return parse_articles(in, options, warnings);
}

void write_articles(std::ostream& out, const ArticleCorpus& articles) {
  for (const auto& a : articles) {
    json obj = {{"id", a.id},
                {"title", a.title},
                {"description", a.description},
                {"source", a.source},
                {"engagement", a.engagement}};
    if (a.veracity) obj["veracity"] = *a.veracity;
    out << obj.dump() << '\n';
  }
}

std::vector<double> normalize_timestamps(std::span<const double> raw) {
  if (raw.empty()) throw validation_error("cannot normalize an empty timestamp list");
  std::vector<double> sorted(raw.begin(), raw.end());
  std::sort(sorted.begin(), sorted.end());
  const double first = sorted.front();
  for (double& t : sorted) t -= first;
  return sorted;
}

SeriesCorpus parse_tweet_series(std::istream& in, std::vector<std::string>* warnings) {
  static const std::set<std::string> known_series = {"id", "veracity", "tweets"};
  static const std::set<std::string> known_tweet = {"id",        "text",     "timestamp", "followers",
                                                    "following", "verified", "likes"};
  SeriesCorpus out;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    const json obj = parse_line(text, line);
    warn_unknown(obj, known_series, "series", line, warnings);
    TweetSeries s;
    s.id = id_field(obj, "id", line);
    s.veracity = veracity_field(obj, line);
    if (!obj.contains("tweets") || !obj.at("tweets").is_array()) {
      throw parse_error("field 'tweets' must be an array" + where(line));
    }
    const json& tweets = obj.at("tweets");
    if (tweets.empty()) throw validation_error("series '" + s.id + "' has no tweets" + where(line));

    std::vector<std::pair<double, Tweet>> raw;
    std::unordered_set<std::string> tweet_ids;
    for (const json& t : tweets) {
      if (!t.is_object()) throw parse_error("tweet record is not an object" + where(line));
      warn_unknown(t, known_tweet, "tweet", line, warnings);
      Tweet tw;
      tw.id = id_field(t, "id", line);
      tw.text = string_field(t, "text", line);
      const double ts = timestamp_field(t, line);
      tw.followers = count_field(t, "followers", tw.id, line);
      tw.following = count_field(t, "following", tw.id, line);
      tw.verified = bool_field(t, "verified", line);
      tw.likes = count_field(t, "likes", tw.id, line);
      if (!tweet_ids.insert(tw.id).second) {
        throw integrity_error("duplicate tweet id '" + tw.id + "' within series '" + s.id + "'" + where(line));
      }
      raw.emplace_back(ts, std::move(tw));
    }
    std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<double> stamps;
    stamps.reserve(raw.size());
    for (const auto& r : raw) stamps.push_back(r.first);
    const std::vector<double> delays = normalize_timestamps(stamps);
    for (std::size_t j = 0; j < raw.size(); ++j) {
      raw[j].second.delta_t = delays[j];
      s.tweets.push_back(std::move(raw[j].second));
    }
    if (!seen.insert(s.id).second) throw integrity_error("duplicate series id '" + s.id + "'" + where(line));
    out.push_back(std::move(s));
  }
  return out;
}

SeriesCorpus load_tweet_series(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open series file " + path.string());
  return parse_tweet_series(in, warnings);
}

void write_tweet_series(std::ostream& out, const SeriesCorpus& series) {
  for (const auto& s : series) {
    json tweets = json::array();
    for (const auto& t : s.tweets) {
      tweets.push_back({{"id", t.id},
                        {"text", t.text},
                        {"timestamp", t.delta_t},
                        {"followers", t.followers},
                        {"following", t.following},
                        {"verified", t.verified},
                        {"likes", t.likes}});
    }
    json obj = {{"id", s.id}, {"tweets", std::move(tweets)}};
    if (s.veracity) obj["veracity"] = *s.veracity;
    out << obj.dump() << '\n';
  }
}

ValidationReport validate_corpus(const ArticleCorpus& articles, const LoadOptions& options) {
  ValidationReport report;
  std::unordered_map<std::string, int> counts;
  for (const auto& a : articles) {
    if (++counts[a.id] == 2) report.push_back({a.id, "duplicate_id", "id occurs more than once"});
    if (a.engagement < 0) report.push_back({a.id, "negative_engagement", std::to_string(a.engagement)});
    if (trim(a.title).empty()) report.push_back({a.id, "empty_title", "title is empty after trim"});
    if (!options.allow_empty_description && trim(a.description).empty()) {
      report.push_back({a.id, "empty_description", "description is empty after trim"});
    }
    if (a.veracity && *a.veracity != 0 && *a.veracity != 1) {
      report.push_back({a.id, "bad_veracity", std::to_string(*a.veracity)});
    }
  }
  return report;
}

ValidationReport validate_corpus(const SeriesCorpus& series) {
  ValidationReport report;
  std::unordered_map<std::string, int> counts;
  for (const auto& s : series) {
    if (++counts[s.id] == 2) report.push_back({s.id, "duplicate_id", "id occurs more than once"});
    if (s.tweets.empty()) {
      report.push_back({s.id, "empty_series", "series has no tweets"});
      continue;
    }
    if (s.tweets.front().delta_t != 0.0) {
      report.push_back({s.id, "delta_t_start", "first delta_t is " + format_double(s.tweets.front().delta_t)});
    }
    std::unordered_set<std::string> tweet_ids;
    for (std::size_t j = 0; j < s.tweets.size(); ++j) {
      const Tweet& t = s.tweets[j];
      if (!tweet_ids.insert(t.id).second) report.push_back({s.id, "duplicate_tweet_id", t.id});
      if (t.delta_t < 0.0) report.push_back({s.id, "negative_delta_t", "tweet " + t.id});
      if (j > 0 && t.delta_t < s.tweets[j - 1].delta_t) {
        report.push_back({s.id, "delta_t_order", "tweet " + t.id + " precedes its predecessor"});
      }
      if (t.followers < 0 || t.following < 0 || t.likes < 0) report.push_back({s.id, "negative_count", "tweet " + t.id});
    }
    if (s.veracity && *s.veracity != 0 && *s.veracity != 1) {
      report.push_back({s.id, "bad_veracity", std::to_string(*s.veracity)});
    }
  }
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream os;
  for (const auto& v : report) os << v.item_id << '\t' << v.rule << '\t' << v.detail << '\n';
  return os.str();
}

void SyntheticSpec::validate() const {
  if (n_items == 0) throw config_error("synthetic n_items must be positive");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw config_error("synthetic positive_rate must be in (0, 1)");
  if (embedding_dim < 1) throw config_error("synthetic embedding_dim must be >= 1");
  if (text_signal_strength < 0.0 || numeric_signal_strength < 0.0) {
    throw config_error("synthetic signal strengths must be non-negative");
  }
  if (shape == CorpusShape::series && (min_length < 1 || max_length < min_length)) {
    throw config_error("synthetic series_length_range must satisfy 1 <= min <= max");
  }
}

namespace {

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> u(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : u) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : u) x /= norm;
  return u;
}

std::vector<double> planted_vector(const std::vector<double>& direction, double offset, Rng& rng) {
  std::vector<double> v(direction.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = rng.normal() + offset * direction[k];
  return v;
}

std::vector<int> planted_labels(std::size_t n, double rate, Rng& rng) {
  const auto positives = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  std::vector<int> y(n, 0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(std::min(positives, n)), 1);
  rng.shuffle(y);
  return y;
}

std::int64_t lognormal_count(double mu, double sigma, Rng& rng) {
  return static_cast<std::int64_t>(std::floor(std::exp(rng.normal(mu, sigma))));
}

void generate_articles(const SyntheticSpec& spec, Rng& rng, SyntheticCorpus& out) {
  const std::size_t n = spec.n_items;
  const std::size_t n_sources = spec.n_sources ? spec.n_sources : std::max<std::size_t>(4, n / 50);
  const auto title_dir = random_unit(spec.embedding_dim, rng);
  const auto desc_dir = random_unit(spec.embedding_dim, rng);
  std::vector<double> propensity(n_sources);
  for (double& g : propensity) g = rng.normal();

  out.truth = planted_labels(n, spec.positive_rate, rng);
  out.store = EmbeddingStore(spec.embedding_dim);

  // Engagement: heavy-tailed draws; for virality the largest values go to the
  // planted positives so a tail threshold recovers them.
  std::vector<std::int64_t> engagement(n);
  for (auto& e : engagement) e = lognormal_count(5.44, 1.6, rng);
  if (spec.task == Task::virality) {
    std::vector<std::int64_t> sorted = engagement;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (out.truth[i] ? pos : neg).push_back(i);
    std::size_t k = 0;
    for (std::size_t i : pos) engagement[i] = sorted[k++];
    for (std::size_t i : neg) engagement[i] = sorted[k++];
  }

  for (std::size_t i = 0; i < n; ++i) {
    const int y = out.truth[i];
    const double offset = (y - 0.5) * spec.text_signal_strength;

    std::vector<double> weights(n_sources);
    double total = 0.0;
    for (std::size_t s = 0; s < n_sources; ++s) {
      weights[s] = std::exp(spec.numeric_signal_strength * (2.0 * y - 1.0) * propensity[s]);
      total += weights[s];
    }
    double pick = rng.uniform() * total;
    std::size_t source = n_sources - 1;
    for (std::size_t s = 0; s < n_sources; ++s) {
      pick -= weights[s];
      if (pick < 0.0) {
        source = s;
        break;
      }
    }

    Article a;
    a.id = "a" + std::to_string(i);
    a.title = "title of " + a.id;
    a.description = "description of " + a.id;
    a.source = "src" + std::to_string(source);
    a.engagement = engagement[i];
    if (spec.task == Task::veracity) a.veracity = y;
    out.store.insert(title_key(a), planted_vector(title_dir, offset, rng));
    out.store.insert(description_key(a), planted_vector(desc_dir, offset, rng));
    out.articles.push_back(std::move(a));
  }
}

void generate_series(const SyntheticSpec& spec, Rng& rng, SyntheticCorpus& out) {
  const std::size_t n = spec.n_items;
  const auto text_dir = random_unit(spec.embedding_dim, rng);
  out.truth = planted_labels(n, spec.positive_rate, rng);
  out.store = EmbeddingStore(spec.embedding_dim);
  const bool first_only = spec.placement == SignalPlacement::first_tweet;

  for (std::size_t i = 0; i < n; ++i) {
    const int y = out.truth[i];
    const std::size_t len =
        spec.min_length + static_cast<std::size_t>(rng.below(spec.max_length - spec.min_length + 1));
    TweetSeries s;
    s.id = "s" + std::to_string(i);
    if (spec.task == Task::veracity) s.veracity = y;
    double clock = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const bool carries = !first_only || j == 0;
      const double text_offset = carries ? (y - 0.5) * spec.text_signal_strength : 0.0;
      const double shift = carries ? (y - 0.5) * spec.numeric_signal_strength : 0.0;
      Tweet t;
      t.id = s.id + "_t" + std::to_string(j);
      t.text = "tweet " + t.id;
      if (j > 0) clock += rng.exponential(1.0 / (600.0 * std::exp(-shift)));
      t.delta_t = clock;
      t.followers = lognormal_count(6.0 + shift, 1.5, rng);
      t.following = lognormal_count(5.5, 1.2, rng);
      t.verified = rng.bernoulli(1.0 / (1.0 + std::exp(1.5 - shift)));
      const std::int64_t likes = lognormal_count((j == 0 ? 3.0 : 1.5) + shift, 1.0, rng);
      t.likes = (first_only && j > 0) ? 0 : likes;
      out.store.insert(t.id, planted_vector(text_dir, text_offset, rng));
      s.tweets.push_back(std::move(t));
    }
    out.series.push_back(std::move(s));
  }
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x5EED));
  SyntheticCorpus out;
  if (spec.shape == CorpusShape::article) {
    generate_articles(spec, rng, out);
  } else {
    generate_series(spec, rng, out);
  }
  return out;
}

}  // namespace viralbench::corpus
