#pragma once

#include "viralbench/features.hpp"
#include "viralbench/models.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace viralbench::evaluation {

struct FoldSplit {
  std::size_t fold = 0;
  std::vector<std::size_t> train;    // row indices, ascending
  std::vector<std::size_t> heldout;  // row indices, ascending
  std::uint64_t seed = 0;
};

struct FoldPlan {
  std::vector<FoldSplit> folds;
  std::vector<std::string> warnings;
};

/// Each class is shuffled with `seed` and dealt round-robin; negatives continue
/// where the positives stopped so fold sizes also differ by at most one.
FoldPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Fingerprint of a split's held-out membership, keyed by item ids.
std::string fold_fingerprint(const FoldSplit& split, std::span<const std::string> item_ids);

enum class Criterion { f1, f_beta };

struct SelectionPolicy {
  Criterion criterion = Criterion::f1;
  double beta = 1.0;

  void validate() const;
  double effective_beta() const { return criterion == Criterion::f1 ? 1.0 : beta; }
  /// "f1" or "f_beta(2)".
  std::string name() const;
};

struct MetricsReport {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.0;

  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  /// Names of ratios whose denominator was zero; they are reported as 0.
  std::vector<std::string> undefined;

  std::size_t size() const { return tp + fp + tn + fn; }
  bool degenerate() const { return !undefined.empty(); }
};

/// Table column order: Acc, BalAcc, F1, Prec, Rec, ROC-AUC.
inline constexpr std::array<const char*, 6> kMetricNames = {"accuracy", "balanced_accuracy", "f1",
                                                            "precision", "recall",            "roc_auc"};
std::array<double, 6> metric_values(const MetricsReport& r);

/// -[w_pos*y*log s(z) + (1-y)*log(1-s(z))] via softplus.
double weighted_bce(double logit, int label, double w_pos);
double weighted_bce(std::span<const double> logits, std::span<const int> labels, double w_pos);

/// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels, bool* undefined = nullptr);

double f_beta(double precision, double recall, double beta);

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const double> scores,
                              std::span<const int> truth);

double score(const MetricsReport& r, const SelectionPolicy& policy);

struct Hyperparameters {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double dropout = 0.1;
  int epochs = 50;
  int batch_size = 32;
  double threshold = 0.5;

  void validate() const;
};

/// Linear decay: lr0 * (1 - epoch / epochs), epoch counted from 0.
double scheduled_lr(double lr0, int epoch, int epochs);

struct TrainOptions {
  /// Select epochs on an inner split of the training rows instead of the
  /// held-out fold.
  bool nested = false;
  std::size_t inner_folds = 5;
  /// Overrides N_neg / N_pos of the training rows when set.
  std::optional<double> positive_weight;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  MetricsReport selection;  // metrics the policy looked at
  MetricsReport heldout;    // equals selection unless nested
};

struct FoldResult {
  std::size_t fold = 0;
  std::optional<models::Checkpoint> checkpoint;  // networks only
  std::vector<EpochRecord> trace;
  int best_epoch = 0;
  double selection_score = 0.0;
  MetricsReport report;
  double positive_weight = 1.0;
  std::string protocol = "heldout";
  std::vector<std::string> log;
};

/// Index into `trace` of the epoch maximizing the policy; earliest wins ties.
std::size_t select_epoch(std::span<const EpochRecord> trace, const SelectionPolicy& policy);

/// Trains one fold for the full epoch budget and keeps the best epoch.
FoldResult train_fold(const models::ModelConfig& config, const features::EncodedDataset& data,
                      std::span<const int> labels, const FoldSplit& split, const Hyperparameters& hp,
                      const SelectionPolicy& policy, const TrainOptions& options = {});

/// Fits a classical baseline on the fold's training rows.
FoldResult evaluate_baseline_fold(models::Family kind, const features::EncodedDataset& data,
                                  std::span<const int> labels, const FoldSplit& split, bool use_text,
                                  bool use_numeric, double threshold);

struct AggregateReport {
  MetricsReport mean;
  MetricsReport stddev;  // population standard deviation over folds
  std::size_t folds = 0;
};

AggregateReport aggregate_folds(std::span<const MetricsReport> reports);

nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const AggregateReport& r);

}  // namespace viralbench::evaluation
