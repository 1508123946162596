#include "viralbench/labeling.hpp"

#include "viralbench/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace viralbench::labeling {

using nlohmann::json;

std::string to_string(Rule r) {
  switch (r) {
    case Rule::percentile_threshold:
      return "percentile_threshold";
    case Rule::median_split:
      return "median_split";
    case Rule::passthrough:
      return "passthrough";
  }
  return "passthrough";
}

Rule parse_rule(const std::string& s) {
  if (s == "percentile_threshold") return Rule::percentile_threshold;
  if (s == "median_split") return Rule::median_split;
  if (s == "passthrough") return Rule::passthrough;
  throw config_error("unknown label rule '" + s + "'");
}

void LabelRule::validate() const {
  if (rule == Rule::percentile_threshold) {
    if (!parameter || !(*parameter > 0.0 && *parameter < 100.0)) {
      throw config_error("percentile_threshold needs a percentile parameter in (0, 100)");
    }
  }
  if (rule == Rule::passthrough && task != Task::veracity) {
    throw config_error("passthrough labels are only defined for the veracity task");
  }
  if (rule != Rule::passthrough && task != Task::virality) {
    throw config_error(to_string(rule) + " labels are only defined for the virality task");
  }
}

std::vector<int> LabelSet::labels() const {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& i : instances) out.push_back(i.label);
  return out;
}

double LabelSet::prevalence() const {
  if (instances.empty()) return 0.0;
  std::size_t pos = 0;
  for (const auto& i : instances) pos += static_cast<std::size_t>(i.label);
  return static_cast<double>(pos) / static_cast<double>(instances.size());
}

bool LabelSet::has_diagnostic(const std::string& code) const {
  return std::any_of(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) { return d.code == code; });
}

double percentile_threshold(std::span<const double> values, double p) {
  if (values.empty()) throw validation_error("percentile of an empty value list");
  if (!(p > 0.0 && p < 100.0)) throw validation_error("percentile must lie in (0, 100)");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // p * n / 100 is exact for integral p and n; the epsilon absorbs
  // representation error of fractional p.
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

namespace {

void add_balance_diagnostics(LabelSet& set) {
  const auto labels = set.labels();
  const auto diag = imbalance_diagnostics(labels);
  if (diag.degenerate) {
    set.diagnostics.push_back({"single_class", "all " + std::to_string(diag.n) + " items received label " +
                                                   std::to_string(labels.empty() ? 0 : labels.front())});
  }
}

}  // namespace

LabelSet label_by_threshold(std::span<const std::string> ids, std::span<const double> values, double tau,
                            const LabelRule& rule) {
  if (ids.size() != values.size()) throw validation_error("label_by_threshold: ids and values differ in length");
  LabelSet set;
  set.rule = rule;
  set.rule.threshold_value = tau;
  set.instances.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    set.instances.push_back({ids[i], values[i] >= tau ? 1 : 0, set.rule});
  }
  add_balance_diagnostics(set);
  if (set.rule.parameter && !set.instances.empty()) {
    const double target = (100.0 - *set.rule.parameter) / 100.0;
    const double slack = 1.0 / static_cast<double>(set.instances.size());
    if (set.prevalence() > target + slack + 1e-12) {
      set.diagnostics.push_back({"ties_at_threshold", "realized prevalence " + format_double(set.prevalence()) +
                                                          " exceeds target " + format_double(target)});
    }
  }
  return set;
}

LabelSet median_split_labels(std::span<const std::string> ids, std::span<const double> totals, const LabelRule& rule) {
  if (ids.empty()) throw validation_error("median split of an empty collection");
  if (ids.size() != totals.size()) throw validation_error("median_split_labels: ids and totals differ in length");
  std::vector<double> sorted(totals.begin(), totals.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  LabelSet set;
  set.rule = rule;
  set.rule.threshold_value = median;
  std::size_t ties = 0;
  for (std::size_t i = 0; i < n; ++i) {
    set.instances.push_back({ids[i], totals[i] > median ? 1 : 0, set.rule});
    if (totals[i] == median) ++ties;
  }
  add_balance_diagnostics(set);
  if (set.prevalence() < 0.4) {
    set.diagnostics.push_back({"degenerate_split", "prevalence " + format_double(set.prevalence()) + " with " +
                                                       std::to_string(ties) + " totals tied at the median"});
  }
  return set;
}

LabelSet median_split_labels(const corpus::SeriesCorpus& series) {
  std::vector<std::string> ids;
  for (const auto& s : series) ids.push_back(s.id);
  const auto totals = engagement_values(series);
  return median_split_labels(ids, totals, LabelRule{Task::virality, Rule::median_split, std::nullopt, std::nullopt});
}

ImbalanceDiagnostics imbalance_diagnostics(std::span<const int> labels) {
  if (labels.empty()) throw validation_error("imbalance diagnostics of an empty label list");
  ImbalanceDiagnostics d;
  d.n = labels.size();
  for (int y : labels) {
    if (y != 0 && y != 1) throw validation_error("labels must be 0 or 1");
    d.positives += static_cast<std::size_t>(y);
  }
  d.negatives = d.n - d.positives;
  d.prevalence = static_cast<double>(d.positives) / static_cast<double>(d.n);
  d.expected_dummy_f1 = d.prevalence;
  d.degenerate = d.positives == 0 || d.negatives == 0;
  if (!d.degenerate) d.positive_weight = static_cast<double>(d.negatives) / static_cast<double>(d.positives);
  return d;
}

std::vector<double> engagement_values(const corpus::ArticleCorpus& articles) {
  std::vector<double> v;
  v.reserve(articles.size());
  for (const auto& a : articles) v.push_back(static_cast<double>(a.engagement));
  return v;
}

std::vector<double> engagement_values(const corpus::SeriesCorpus& series) {
  std::vector<double> v;
  v.reserve(series.size());
  for (const auto& s : series) v.push_back(static_cast<double>(s.total_likes()));
  return v;
}

namespace {

template <typename Corpus>
std::vector<std::string> item_ids(const Corpus& items) {
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(it.id);
  return ids;
}

template <typename Corpus>
LabelSet passthrough(const Corpus& items, const LabelRule& rule) {
  LabelSet set;
  set.rule = rule;
  for (const auto& it : items) {
    if (!it.veracity) throw validation_error("item '" + it.id + "' has no veracity label");
    set.instances.push_back({it.id, *it.veracity, rule});
  }
  add_balance_diagnostics(set);
  return set;
}

template <typename Corpus>
LabelSet fit_impl(const Corpus& items, const LabelRule& rule) {
  rule.validate();
  if (items.empty()) throw validation_error("cannot label an empty corpus");
  const auto ids = item_ids(items);
  const auto values = engagement_values(items);
  switch (rule.rule) {
    case Rule::percentile_threshold:
      return label_by_threshold(ids, values, percentile_threshold(values, *rule.parameter), rule);
    case Rule::median_split:
      return median_split_labels(ids, values, rule);
    case Rule::passthrough:
      return passthrough(items, rule);
  }
  throw config_error("unhandled label rule");
}

template <typename Corpus>
LabelSet apply_impl(const Corpus& items, const LabelRule& fitted) {
  if (!fitted.fitted()) throw config_error("label rule has not been fitted");
  const auto ids = item_ids(items);
  const auto values = engagement_values(items);
  LabelSet set;
  switch (fitted.rule) {
    case Rule::percentile_threshold:
      return label_by_threshold(ids, values, *fitted.threshold_value, fitted);
    case Rule::median_split:
      set.rule = fitted;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        set.instances.push_back({ids[i], values[i] > *fitted.threshold_value ? 1 : 0, fitted});
      }
      return set;
    case Rule::passthrough:
      return passthrough(items, fitted);
  }
  throw config_error("unhandled label rule");
}

}  // namespace

LabelSet fit_labels(const corpus::ArticleCorpus& articles, const LabelRule& rule) { return fit_impl(articles, rule); }
LabelSet fit_labels(const corpus::SeriesCorpus& series, const LabelRule& rule) { return fit_impl(series, rule); }
LabelSet apply_rule(const corpus::ArticleCorpus& articles, const LabelRule& fitted) {
  return apply_impl(articles, fitted);
}
LabelSet apply_rule(const corpus::SeriesCorpus& series, const LabelRule& fitted) { return apply_impl(series, fitted); }

void write_labels(std::ostream& out, const LabelSet& labels) {
  for (const auto& inst : labels.instances) {
    const LabelRule& r = inst.provenance;
    json obj = {{"item_id", inst.item_id},
                {"label", inst.label},
                {"task", corpus::to_string(r.task)},
                {"rule", to_string(r.rule)},
                {"parameter", r.parameter ? json(*r.parameter) : json(nullptr)},
                {"threshold_value", r.threshold_value ? json(*r.threshold_value) : json(nullptr)}};
    out << obj.dump() << '\n';
  }
}

LabelSet read_labels(std::istream& in) {
  LabelSet set;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
      LabeledInstance inst;
      inst.item_id = obj.at("item_id").get<std::string>();
      inst.label = obj.at("label").get<int>();
      if (inst.label != 0 && inst.label != 1) throw parse_error("label must be 0 or 1 (line " + std::to_string(line) + ")");
      inst.provenance.task = corpus::parse_task(obj.at("task").get<std::string>());
      inst.provenance.rule = parse_rule(obj.at("rule").get<std::string>());
      if (!obj.at("parameter").is_null()) inst.provenance.parameter = obj.at("parameter").get<double>();
      if (!obj.at("threshold_value").is_null()) inst.provenance.threshold_value = obj.at("threshold_value").get<double>();
      if (set.instances.empty()) {
        set.rule = inst.provenance;
      } else if (!(inst.provenance == set.rule)) {
        throw parse_error("mixed label provenance in one file (line " + std::to_string(line) + ")");
      }
      set.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw parse_error(std::string("label record: ") + e.what() + " (line " + std::to_string(line) + ")");
    }
  }
  return set;
}

}  // namespace viralbench::labeling
