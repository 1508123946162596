#include "viralbench/models.hpp"

#include <array>

namespace viralbench::models {

using ag::Graph;
using ag::Var;
using features::Batch;
using nn::Bound;

namespace {

struct FamilyName {
  Family family;
  const char* name;
};

constexpr std::array<FamilyName, 12> kFamilyNames = {{
    {Family::mlp, "mlp"},
    {Family::mlp_source_emb, "mlp+source_emb"},
    {Family::mlp_avg_eng, "mlp+avg_eng"},
    {Family::mlp_gating, "mlp+gating"},
    {Family::rnn, "rnn"},
    {Family::gru, "gru"},
    {Family::lstm, "lstm"},
    {Family::cnn, "cnn"},
    {Family::transformer, "transformer"},
    {Family::dummy_stratified, "dummy_stratified"},
    {Family::linear, "linear"},
    {Family::tree_ensemble, "tree_ensemble"},
}};

}  // namespace

std::string to_string(Family f) {
  for (const auto& e : kFamilyNames)
    if (e.family == f) return e.name;
  return "mlp";
}

Family parse_family(const std::string& s) {
  for (const auto& e : kFamilyNames)
    if (s == e.name) return e.family;
  throw config_error("unknown model family '" + s + "'");
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> all = [] {
    std::vector<Family> v;
    for (const auto& e : kFamilyNames) v.push_back(e.family);
    return v;
  }();
  return all;
}

bool is_baseline(Family f) {
  return f == Family::dummy_stratified || f == Family::linear || f == Family::tree_ensemble;
}

bool is_article_head(Family f) {
  return f == Family::mlp || f == Family::mlp_source_emb || f == Family::mlp_avg_eng || f == Family::mlp_gating;
}

bool is_sequence(Family f) {
  return f == Family::rnn || f == Family::gru || f == Family::lstm || f == Family::cnn || f == Family::transformer;
}

std::string to_string(InputView v) {
  switch (v) {
    case InputView::all:
      return "all";
    case InputView::text_only:
      return "text_only";
    case InputView::numeric_only:
      return "numeric_only";
  }
  return "all";
}

InputView parse_view(const std::string& s) {
  if (s == "all") return InputView::all;
  if (s == "text_only") return InputView::text_only;
  if (s == "numeric_only") return InputView::numeric_only;
  throw config_error("unknown input view '" + s + "'");
}

Architecture paper_architecture() { return Architecture{}; }

void ModelConfig::validate() const {
  if (is_baseline(family)) throw config_error(to_string(family) + " is a classical baseline, not a network");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw config_error("dropout must lie in [0, 1)");
  if (text_dim <= 0) throw config_error("text_dim must be positive");
  const auto& a = arch;
  if (a.head_hidden <= 0 || a.recurrent_units <= 0 || a.conv_channels <= 0 || a.model_width <= 0 || a.heads <= 0 ||
      a.ffn_width <= 0 || a.projection_width <= 0 || a.source_embedding <= 0) {
    throw config_error("architecture sizes must be positive");
  }
  if (is_article_head(family)) {
    if (view == InputView::numeric_only) throw config_error("article models have no numeric-only view");
    if (family == Family::mlp_source_emb && source_count < 1) throw config_error("source_count must be >= 1");
  } else {
    if (max_length <= 0) throw config_error("series models need max_length >= 1");
    if (family == Family::transformer && a.model_width % a.heads != 0) {
      throw config_error("model_width must be divisible by the number of heads");
    }
  }
}

Eigen::Index ModelConfig::input_dim() const {
  if (is_article_head(family)) {
    switch (family) {
      case Family::mlp_source_emb:
        return text_dim + arch.source_embedding;
      case Family::mlp_avg_eng:
        return text_dim + 1;
      default:
        return text_dim;
    }
  }
  switch (view) {
    case InputView::text_only:
      return text_dim;
    case InputView::numeric_only:
      return arch.projection_width;
    case InputView::all:
      break;
  }
  return text_dim + arch.projection_width;
}

Vector Model::logits(const Batch& batch) const {
  Graph g(false);
  const Bound p = params_.bind(g);
  const Matrix& z = g.value(forward(g, p, batch, nullptr));
  return z.col(0);
}

namespace {

void require_width(const Matrix& m, Eigen::Index width, const char* what) {
  if (m.cols() != width) {
    throw config_error(std::string(what) + " width " + std::to_string(m.cols()) + " does not match configured " +
                       std::to_string(width));
  }
}

// -- article heads ---------------------------------------------------------------

class ArticleMlp : public Model {
 public:
  ArticleMlp(const ModelConfig& c, Rng& rng) : Model(c) {
    if (c.family == Family::mlp_source_emb) {
      Matrix table = nn::uniform_fan_in(c.source_count, c.arch.source_embedding, 1, rng);
      table.row(0).setZero();
      source_table_ = params_.add("source_embedding", std::move(table));
    }
    if (c.family == Family::mlp_gating) {
      gate_ = features::GatedFusion(params_, "gate", c.text_dim, 1, c.text_dim, rng);
    }
    head_ = nn::MlpHead(params_, "head", c.input_dim(), c.arch.head_hidden, rng);
  }

  Var forward(Graph& g, const Bound& p, const Batch& batch, Rng* rng) const override {
    require_width(batch.text, config_.text_dim, "article text");
    Var x = g.constant(batch.text);
    switch (config_.family) {
      case Family::mlp_source_emb: {
        if (static_cast<Eigen::Index>(batch.source.size()) != batch.size) {
          throw config_error("batch has no source indices");
        }
        for (int s : batch.source) {
          if (s < 0 || s >= config_.source_count) throw config_error("source index out of range");
        }
        const Var parts[] = {x, ag::gather_rows(g, p[source_table_], batch.source)};
        x = ag::concat_cols(g, parts);
        break;
      }
      case Family::mlp_avg_eng: {
        const Var parts[] = {x, g.constant(batch.engagement)};
        x = ag::concat_cols(g, parts);
        break;
      }
      case Family::mlp_gating:
        x = gate_.apply(g, p, x, g.constant(batch.engagement));
        break;
      default:
        break;
    }
    return head_(g, p, x, config_.dropout, rng);
  }

 private:
  std::size_t source_table_ = 0;
  features::GatedFusion gate_;
  nn::MlpHead head_;
};

// -- series models -----------------------------------------------------------------

/// Shared input plumbing: per-step [text ; projection(numeric)] restricted to the view.
class SeriesModel : public Model {
 public:
  SeriesModel(const ModelConfig& c, Rng& rng) : Model(c) {
    if (c.view != InputView::text_only) {
      projection_ = features::NumericProjection(params_, "projection", c.arch.projection_width, rng);
    }
  }

 protected:
  Var step_inputs(Graph& g, const Bound& p, const Batch& batch) const {
    if (batch.length < 1 || batch.length > config_.max_length) {
      throw config_error("batch length " + std::to_string(batch.length) + " outside [1, " +
                         std::to_string(config_.max_length) + "]");
    }
    for (Eigen::Index b = 0; b < batch.size; ++b) {
      if (batch.mask.row(b).sum() == 0.0) {
        throw validation_error("sample " + std::to_string(b) + " has an all-zero mask");
      }
    }
    if (config_.view == InputView::text_only) {
      require_width(batch.text, config_.text_dim, "tweet text");
      return g.constant(batch.text);
    }
    require_width(batch.numeric, static_cast<Eigen::Index>(features::kNumericFeatures), "numeric");
    const Var proj = projection_.apply(g, p, g.constant(batch.numeric));
    if (config_.view == InputView::numeric_only) return proj;
    require_width(batch.text, config_.text_dim, "tweet text");
    const Var parts[] = {g.constant(batch.text), proj};
    return ag::concat_cols(g, parts);
  }

  /// Row t * B + b of the result is mask(b, t).
  static Vector flat_mask(const Batch& batch) {
    Vector m(batch.size * batch.length);
    for (Eigen::Index t = 0; t < batch.length; ++t)
      for (Eigen::Index b = 0; b < batch.size; ++b) m[t * batch.size + b] = batch.mask(b, t);
    return m;
  }

  features::NumericProjection projection_;
};

enum class CellKind { rnn, gru, lstm };

/// One direction of a recurrent layer (gate order as in the common
/// frameworks: GRU r, z, n; LSTM i, f, g, o).
struct RecurrentDirection {
  nn::Linear input;
  std::size_t recurrent = 0;
  std::size_t recurrent_bias = 0;  // GRU only
  Eigen::Index units = 0;
  CellKind kind = CellKind::rnn;

  RecurrentDirection() = default;
  RecurrentDirection(nn::ParameterSet& ps, const std::string& prefix, CellKind k, Eigen::Index in, Eigen::Index h,
                     Rng& rng)
      : units(h), kind(k) {
    const Eigen::Index gates = k == CellKind::rnn ? 1 : (k == CellKind::gru ? 3 : 4);
    input = nn::Linear(ps, prefix + ".input", in, gates * h, rng);
    recurrent = ps.add(prefix + ".recurrent", nn::orthogonal_blocks(h, gates * h, rng));
    if (k == CellKind::gru) recurrent_bias = ps.add(prefix + ".recurrent_bias", nn::uniform_fan_in(1, 3 * h, h, rng));
  }

  /// Final state over the masked sequence; xw is the precomputed input map.
  Var run(Graph& g, const Bound& p, Var xw, const Batch& batch, bool reverse) const {
    const Eigen::Index B = batch.size;
    const Eigen::Index L = batch.length;
    Var h = g.constant(Matrix::Zero(B, units));
    Var c = g.constant(Matrix::Zero(B, units));
    for (Eigen::Index s = 0; s < L; ++s) {
      const Eigen::Index t = reverse ? L - 1 - s : s;
      const Var x = ag::row_block(g, xw, t * B, B);
      const Vector keep = batch.mask.col(t);
      Var h_new;
      Var c_new;
      switch (kind) {
        case CellKind::rnn:
          h_new = ag::tanh(g, ag::add(g, x, ag::matmul(g, h, p[recurrent])));
          break;
        case CellKind::gru: {
          const Var hw = ag::add_row(g, ag::matmul(g, h, p[recurrent]), p[recurrent_bias]);
          const Var r = ag::sigmoid(
              g, ag::add(g, ag::slice_cols(g, x, 0, units), ag::slice_cols(g, hw, 0, units)));
          const Var z = ag::sigmoid(
              g, ag::add(g, ag::slice_cols(g, x, units, units), ag::slice_cols(g, hw, units, units)));
          const Var n = ag::tanh(g, ag::add(g, ag::slice_cols(g, x, 2 * units, units),
                                            ag::mul(g, r, ag::slice_cols(g, hw, 2 * units, units))));
          h_new = ag::add(g, ag::mul(g, ag::one_minus(g, z), n), ag::mul(g, z, h));
          break;
        }
        case CellKind::lstm: {
          const Var pre = ag::add(g, x, ag::matmul(g, h, p[recurrent]));
          const Var i = ag::sigmoid(g, ag::slice_cols(g, pre, 0, units));
          const Var f = ag::sigmoid(g, ag::slice_cols(g, pre, units, units));
          const Var gg = ag::tanh(g, ag::slice_cols(g, pre, 2 * units, units));
          const Var o = ag::sigmoid(g, ag::slice_cols(g, pre, 3 * units, units));
          c_new = ag::add(g, ag::mul(g, f, c), ag::mul(g, i, gg));
          h_new = ag::mul(g, o, ag::tanh(g, c_new));
          c = ag::select_rows(g, c_new, c, keep);
          break;
        }
      }
      h = ag::select_rows(g, h_new, h, keep);
    }
    return h;
  }
};

class BiRecurrent : public SeriesModel {
 public:
  BiRecurrent(const ModelConfig& c, CellKind kind, Rng& rng) : SeriesModel(c, rng) {
    const Eigen::Index h = c.arch.recurrent_units;
    forward_ = RecurrentDirection(params_, "forward", kind, c.input_dim(), h, rng);
    backward_ = RecurrentDirection(params_, "backward", kind, c.input_dim(), h, rng);
    head_ = nn::MlpHead(params_, "head", 2 * h, c.arch.head_hidden, rng);
  }

  Var forward(Graph& g, const Bound& p, const Batch& batch, Rng* rng) const override {
    const Var x = step_inputs(g, p, batch);
    const Var fwd = forward_.run(g, p, forward_.input(g, p, x), batch, false);
    const Var bwd = backward_.run(g, p, backward_.input(g, p, x), batch, true);
    const Var parts[] = {fwd, bwd};
    return head_(g, p, ag::concat_cols(g, parts), config_.dropout, rng);
  }

 private:
  RecurrentDirection forward_;
  RecurrentDirection backward_;
  nn::MlpHead head_;
};

/// Kernel-3, padding-1 convolution along time as one matmul over
/// [x(t-1) ; x(t) ; x(t+1)].
struct Conv1d {
  nn::Linear map;

  Conv1d() = default;
  Conv1d(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index out, Rng& rng)
      : map(ps, prefix, 3 * in, out, rng) {}

  Var operator()(Graph& g, const Bound& p, Var x, Eigen::Index batch) const {
    const Var taps[] = {ag::time_shift(g, x, batch, -1), x, ag::time_shift(g, x, batch, 1)};
    return map(g, p, ag::concat_cols(g, taps));
  }
};

class TemporalCnn : public SeriesModel {
 public:
  TemporalCnn(const ModelConfig& c, Rng& rng) : SeriesModel(c, rng) {
    const Eigen::Index ch = c.arch.conv_channels;
    conv1_ = Conv1d(params_, "conv1", c.input_dim(), ch, rng);
    conv2_ = Conv1d(params_, "conv2", ch, ch, rng);
    head_ = nn::MlpHead(params_, "head", ch, c.arch.head_hidden, rng);
  }

  Var forward(Graph& g, const Bound& p, const Batch& batch, Rng* rng) const override {
    const Vector m = flat_mask(batch);
    Var x = ag::scale_rows(g, step_inputs(g, p, batch), m);
    x = ag::scale_rows(g, ag::gelu(g, conv1_(g, p, x, batch.size)), m);
    x = ag::gelu(g, conv2_(g, p, x, batch.size));
    return head_(g, p, ag::masked_max_pool(g, x, batch.size, batch.mask), config_.dropout, rng);
  }

 private:
  Conv1d conv1_;
  Conv1d conv2_;
  nn::MlpHead head_;
};

/// One post-norm encoder layer over learned positions, then masked max-pool.
class TransformerEncoder : public SeriesModel {
 public:
  TransformerEncoder(const ModelConfig& c, Rng& rng) : SeriesModel(c, rng) {
    const Eigen::Index d = c.arch.model_width;
    input_ = nn::Linear(params_, "input", c.input_dim(), d, rng);
    positions_ = params_.add("positions", nn::uniform_fan_in(c.max_length, d, static_cast<std::size_t>(d), rng));
    qkv_ = nn::Linear(params_, "attention.qkv", d, 3 * d, rng);
    out_ = nn::Linear(params_, "attention.out", d, d, rng);
    norm1_gain_ = params_.add("norm1.gain", Matrix::Ones(1, d));
    norm1_bias_ = params_.add("norm1.bias", Matrix::Zero(1, d));
    ffn1_ = nn::Linear(params_, "ffn.hidden", d, c.arch.ffn_width, rng);
    ffn2_ = nn::Linear(params_, "ffn.output", c.arch.ffn_width, d, rng);
    norm2_gain_ = params_.add("norm2.gain", Matrix::Ones(1, d));
    norm2_bias_ = params_.add("norm2.bias", Matrix::Zero(1, d));
    head_ = nn::MlpHead(params_, "head", d, c.arch.head_hidden, rng);
  }

  Var forward(Graph& g, const Bound& p, const Batch& batch, Rng* rng) const override {
    const Eigen::Index B = batch.size;
    const Eigen::Index d = config_.arch.model_width;
    std::vector<int> time(static_cast<std::size_t>(B * batch.length));
    for (Eigen::Index t = 0; t < batch.length; ++t)
      for (Eigen::Index b = 0; b < B; ++b) time[static_cast<std::size_t>(t * B + b)] = static_cast<int>(t);

    Var x = ag::add(g, input_(g, p, step_inputs(g, p, batch)), ag::gather_rows(g, p[positions_], time));
    const Var qkv = qkv_(g, p, x);
    Var attn = ag::multi_head_attention(g, ag::slice_cols(g, qkv, 0, d), ag::slice_cols(g, qkv, d, d),
                                        ag::slice_cols(g, qkv, 2 * d, d), B, config_.arch.heads, batch.mask);
    attn = nn::dropout(g, out_(g, p, attn), config_.dropout, rng);
    x = ag::layer_norm(g, ag::add(g, x, attn), p[norm1_gain_], p[norm1_bias_]);
    Var ff = ffn2_(g, p, nn::dropout(g, ag::gelu(g, ffn1_(g, p, x)), config_.dropout, rng));
    ff = nn::dropout(g, ff, config_.dropout, rng);
    x = ag::layer_norm(g, ag::add(g, x, ff), p[norm2_gain_], p[norm2_bias_]);
    return head_(g, p, ag::masked_max_pool(g, x, B, batch.mask), config_.dropout, rng);
  }

 private:
  nn::Linear input_;
  std::size_t positions_ = 0;
  nn::Linear qkv_;
  nn::Linear out_;
  std::size_t norm1_gain_ = 0, norm1_bias_ = 0;
  nn::Linear ffn1_;
  nn::Linear ffn2_;
  std::size_t norm2_gain_ = 0, norm2_bias_ = 0;
  nn::MlpHead head_;
};

}  // namespace

std::unique_ptr<Model> make_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  switch (config.family) {
    case Family::mlp:
    case Family::mlp_source_emb:
    case Family::mlp_avg_eng:
    case Family::mlp_gating:
      return std::make_unique<ArticleMlp>(config, rng);
    case Family::rnn:
      return std::make_unique<BiRecurrent>(config, CellKind::rnn, rng);
    case Family::gru:
      return std::make_unique<BiRecurrent>(config, CellKind::gru, rng);
    case Family::lstm:
      return std::make_unique<BiRecurrent>(config, CellKind::lstm, rng);
    case Family::cnn:
      return std::make_unique<TemporalCnn>(config, rng);
    case Family::transformer:
      return std::make_unique<TransformerEncoder>(config, rng);
    default:
      break;
  }
  throw config_error(to_string(config.family) + " is not a network family");
}

}  // namespace viralbench::models
