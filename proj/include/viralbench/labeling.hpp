#pragma once

#include "viralbench/corpus.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace viralbench::labeling {

using corpus::Task;

enum class Rule { percentile_threshold, median_split, passthrough };

std::string to_string(Rule r);
Rule parse_rule(const std::string& s);

/// How a binary label was derived. threshold_value is set once the rule has
/// been fitted on data (tau for percentiles, the median for median splits).
struct LabelRule {
  Task task = Task::veracity;
  Rule rule = Rule::passthrough;
  std::optional<double> parameter;  // percentile p in (0, 100)
  std::optional<double> threshold_value;

  bool fitted() const { return rule == Rule::passthrough || threshold_value.has_value(); }
  void validate() const;
  bool operator==(const LabelRule&) const = default;
};

struct LabeledInstance {
  std::string item_id;
  int label = 0;
  LabelRule provenance;
};

struct Diagnostic {
  std::string code;
  std::string detail;
};

struct LabelSet {
  LabelRule rule;
  std::vector<LabeledInstance> instances;
  std::vector<Diagnostic> diagnostics;

  std::vector<int> labels() const;
  double prevalence() const;
  bool has_diagnostic(const std::string& code) const;
};

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-indexed).
double percentile_threshold(std::span<const double> values, double p);

/// label = 1 iff value >= tau.
LabelSet label_by_threshold(std::span<const std::string> ids, std::span<const double> values, double tau,
                            const LabelRule& rule);

/// Median of the per-series total likes (midpoint of the two central values
/// for even n); label = 1 iff total > median, so ties go negative.
LabelSet median_split_labels(const corpus::SeriesCorpus& series);
LabelSet median_split_labels(std::span<const std::string> ids, std::span<const double> totals, const LabelRule& rule);

struct ImbalanceDiagnostics {
  std::size_t n = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double prevalence = 0.0;
  /// N_neg / N_pos; empty when only one class is present.
  std::optional<double> positive_weight;
  /// Expected F1 of stratified guessing, equal to the prevalence.
  double expected_dummy_f1 = 0.0;
  bool degenerate = false;
};

ImbalanceDiagnostics imbalance_diagnostics(std::span<const int> labels);

/// Engagement for articles, total likes for series.
std::vector<double> engagement_values(const corpus::ArticleCorpus& articles);
std::vector<double> engagement_values(const corpus::SeriesCorpus& series);

/// Fits the rule on the full corpus (threshold recorded) and applies it.
LabelSet fit_labels(const corpus::ArticleCorpus& articles, const LabelRule& rule);
LabelSet fit_labels(const corpus::SeriesCorpus& series, const LabelRule& rule);

/// Re-derives labels from a fitted provenance snapshot without refitting.
LabelSet apply_rule(const corpus::ArticleCorpus& articles, const LabelRule& fitted);
LabelSet apply_rule(const corpus::SeriesCorpus& series, const LabelRule& fitted);

/// One JSON object per line: {item_id, label, task, rule, parameter, threshold_value}.
void write_labels(std::ostream& out, const LabelSet& labels);
LabelSet read_labels(std::istream& in);

}  // namespace viralbench::labeling
