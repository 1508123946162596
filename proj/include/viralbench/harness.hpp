#pragma once

#include "viralbench/corpus.hpp"
#include "viralbench/evaluation.hpp"
#include "viralbench/labeling.hpp"
#include "viralbench/models.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace viralbench::harness {

namespace fs = std::filesystem;
using nlohmann::json;

struct EmbeddingServiceConfig {
  HttpEmbeddingClient::Options options;
  fs::path cache;
};

/// Where the items come from: files on disk or a synthetic recipe.
struct DataSource {
  corpus::CorpusShape shape = corpus::CorpusShape::article;
  std::optional<fs::path> corpus;
  std::optional<fs::path> store;
  std::optional<fs::path> labels;
  std::optional<corpus::SyntheticSpec> synthetic;
  std::optional<EmbeddingServiceConfig> embedding_service;
  bool allow_empty_description = false;
};

/// A fully resolved experiment. Every field must be present in the file; the
/// ones that do not apply are written as null.
struct ExperimentConfig {
  std::string name;
  DataSource data;
  corpus::Task task = corpus::Task::veracity;
  labeling::LabelRule label;
  std::string view_name = "all";
  models::Family family = models::Family::mlp;
  models::InputView view = models::InputView::all;
  std::string architecture_name = "paper";
  models::Architecture arch;
  std::string profile = "custom";
  evaluation::Hyperparameters hp;
  std::optional<std::size_t> length;
  evaluation::SelectionPolicy selection;
  std::size_t folds = 10;
  bool nested = false;
  std::uint64_t seed = 0;
  fs::path output = "out";
  int workers = 1;

  void validate() const;
};

evaluation::Hyperparameters profile_hyperparameters(const std::string& profile);

/// Relative paths resolve against base_dir.
ExperimentConfig parse_config(const json& j, const fs::path& base_dir = {});
ExperimentConfig load_config(const fs::path& path);
json to_json(const ExperimentConfig& c);

/// Corpus, store and labels for one experiment, checked for coverage.
struct Dataset {
  corpus::CorpusShape shape = corpus::CorpusShape::article;
  corpus::ArticleCorpus articles;
  corpus::SeriesCorpus series;
  EmbeddingStore store;
  labeling::LabelSet labels;
  std::vector<std::string> ids;
  std::vector<std::string> warnings;

  std::size_t size() const { return ids.size(); }
  std::vector<int> label_vector() const { return labels.labels(); }
  /// FNV-1a over the canonical corpus, the store and the labels.
  std::string hash() const;
};

corpus::ArticleCorpus load_article_source(const DataSource& d, std::vector<std::string>* warnings);
Dataset load_dataset(const ExperimentConfig& config);
/// Same corpus and labels with a different embedding store.
Dataset with_store(const Dataset& base, EmbeddingStore store);

/// Store keys every item needs.
std::vector<std::string> required_keys(const Dataset& d);

struct TableRow {
  std::string dataset;
  std::string model;
  evaluation::AggregateReport aggregate;
};

struct RunResult {
  json manifest;
  TableRow row;
  std::vector<evaluation::FoldResult> folds;
};

struct RunOptions {
  /// Write manifest, checkpoints and tables under config.output.
  bool write_outputs = true;
};

/// Stratified k-fold CV end to end.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_experiment(const ExperimentConfig& config, const Dataset& data, const RunOptions& options = {});

struct AblationResult {
  std::vector<RunResult> runs;
};
AblationResult run_ablation(const ExperimentConfig& base, const std::vector<std::string>& views,
                            const RunOptions& options = {});

struct SweepResult {
  std::vector<std::size_t> lengths;
  std::vector<RunResult> runs;
  double r = 0.0;
  bool zero_variance = false;
};
SweepResult run_length_sweep(const ExperimentConfig& base, const std::vector<std::size_t>& lengths,
                             const RunOptions& options = {});

struct SwapResult {
  RunResult a;
  RunResult b;
  std::array<double, 6> delta{};  // b - a, table column order
};
SwapResult run_embedding_swap(const ExperimentConfig& base, const fs::path& store_a, const fs::path& store_b,
                              const RunOptions& options = {});
SwapResult run_embedding_swap(const ExperimentConfig& base, const Dataset& data, const EmbeddingStore& store_b,
                              const RunOptions& options = {});

/// Sample Pearson correlation; 0 with zero_variance set when either side is constant.
double pearson_r(std::span<const double> xs, std::span<const double> ys, bool* zero_variance = nullptr);

enum class ReportFormat { text, csv };

/// Columns Acc, BalAcc, F1, Prec, Rec, ROC-AUC; the text format marks column
/// maxima with '*' when there is more than one row.
std::string emit_report(const std::vector<TableRow>& rows, ReportFormat format);
std::vector<TableRow> parse_report_csv(const std::string& csv);
void write_report_files(const fs::path& dir, const std::string& stem, const std::vector<TableRow>& rows);

/// Table rows of every manifest.json under dir, in path order.
std::vector<TableRow> collect_rows(const fs::path& dir);

}  // namespace viralbench::harness
