#pragma once

#include "viralbench/features.hpp"
#include "viralbench/nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace viralbench::models {

using ag::Matrix;
using ag::Vector;

enum class Family {
  mlp,
  mlp_source_emb,
  mlp_avg_eng,
  mlp_gating,
  rnn,
  gru,
  lstm,
  cnn,
  transformer,
  dummy_stratified,
  linear,
  tree_ensemble,
};

/// Config spellings: "mlp", "mlp+source_emb", "mlp+avg_eng", "mlp+gating", "rnn", ...
std::string to_string(Family f);
Family parse_family(const std::string& s);
const std::vector<Family>& all_families();

bool is_baseline(Family f);
bool is_article_head(Family f);
bool is_sequence(Family f);

/// Which per-tweet signals a series model sees.
enum class InputView { all, text_only, numeric_only };

std::string to_string(InputView v);
InputView parse_view(const std::string& s);

/// Layer sizes. The defaults are the full-size architecture.
struct Architecture {
  Eigen::Index head_hidden = 256;
  Eigen::Index recurrent_units = 128;  // per direction
  Eigen::Index conv_channels = 128;
  Eigen::Index model_width = 256;
  Eigen::Index heads = 8;
  Eigen::Index ffn_width = 512;
  Eigen::Index projection_width = 32;
  Eigen::Index source_embedding = 16;

  bool operator==(const Architecture&) const = default;
};

Architecture paper_architecture();

struct ModelConfig {
  Family family = Family::mlp;
  InputView view = InputView::all;
  /// Article heads: width of [title ; description]. Series: per-tweet embedding width.
  Eigen::Index text_dim = 0;
  /// Series: number of time steps (and positional table rows).
  Eigen::Index max_length = 0;
  /// mlp+source_emb: vocabulary size including the unknown slot 0.
  int source_count = 1;
  Architecture arch;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  /// Width of the per-step input of a series model, or of the head input of an
  /// article model.
  Eigen::Index input_dim() const;
  bool operator==(const ModelConfig&) const = default;
};

/// A trainable network. Parameters live in `params()`; forward builds graph
/// nodes against handles bound from them.
class Model {
 public:
  explicit Model(ModelConfig config) : config_(std::move(config)) {}
  virtual ~Model() = default;

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Bx1 logits. Dropout is active iff dropout_rng is non-null.
  virtual ag::Var forward(ag::Graph& g, const nn::Bound& p, const features::Batch& batch, Rng* dropout_rng) const = 0;

  /// Evaluation-mode logits.
  Vector logits(const features::Batch& batch) const;

 protected:
  ModelConfig config_;
  nn::ParameterSet params_;
};

nlohmann::json model_config_json(const ModelConfig& config);
/// Rejects unknown and missing fields.
ModelConfig model_config_from(const nlohmann::json& j);

/// Builds a freshly initialized network; parameters are drawn from config.seed.
std::unique_ptr<Model> make_model(const ModelConfig& config);

/// Best-epoch snapshot of a trained network.
struct Checkpoint {
  ModelConfig config;
  nn::ParameterSet params;
  int epoch = 0;
  std::string selection_metric;
  double selection_score = 0.0;
};

Checkpoint snapshot(const Model& model, int epoch, const std::string& metric, double score);
std::unique_ptr<Model> restore(const Checkpoint& checkpoint);

/// Versioned JSON container; unknown fields are rejected on read.
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// -- classical baselines -------------------------------------------------------

struct BaselinePrediction {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct BaselineOptions {
  std::uint64_t seed = 0;
  /// Positive-class weight for the linear model.
  double positive_weight = 1.0;
  /// Inverse L2 strength of the linear model.
  double inverse_regularization = 1.0;
  int trees = 100;
  double threshold = 0.5;
};

/// Fits on (x_train, y_train) and scores x_test. Rows are samples.
BaselinePrediction fit_predict_baseline(Family kind, const Matrix& x_train, std::span<const int> y_train,
                                        const Matrix& x_test, const BaselineOptions& options);

}  // namespace viralbench::models
