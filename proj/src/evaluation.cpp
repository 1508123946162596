#include "viralbench/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace viralbench::evaluation {

using nlohmann::json;

FoldPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw config_error("k must be at least 2");
  if (labels.size() < k) throw config_error("k exceeds the number of items");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw validation_error("labels must be 0 or 1");
    (labels[i] == 1 ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) throw validation_error("stratified folds need both classes");

  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<std::vector<std::size_t>> held(k);
  for (std::size_t i = 0; i < pos.size(); ++i) held[i % k].push_back(pos[i]);
  const std::size_t offset = pos.size() % k;
  for (std::size_t i = 0; i < neg.size(); ++i) held[(offset + i) % k].push_back(neg[i]);

  FoldPlan plan;
  for (std::size_t f = 0; f < k; ++f) {
    FoldSplit s;
    s.fold = f;
    s.seed = seed;
    s.heldout = held[f];
    std::sort(s.heldout.begin(), s.heldout.end());
    std::vector<char> in_heldout(labels.size(), 0);
    std::size_t fold_pos = 0;
    for (std::size_t r : s.heldout) {
      in_heldout[r] = 1;
      fold_pos += static_cast<std::size_t>(labels[r]);
    }
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (!in_heldout[r]) s.train.push_back(r);
    if (fold_pos == 0 || fold_pos == s.heldout.size()) {
      plan.warnings.push_back("degenerate fold " + std::to_string(f) + ": held-out rows contain " +
                              (fold_pos == 0 ? "no positives" : "no negatives"));
    }
    plan.folds.push_back(std::move(s));
  }
  return plan;
}

std::string fold_fingerprint(const FoldSplit& split, std::span<const std::string> item_ids) {
  Fnv1a h;
  h.update(std::to_string(split.fold));
  for (std::size_t r : split.heldout) h.update(item_ids[r]);
  return h.hex();
}

void SelectionPolicy::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw config_error("beta must be positive");
}

std::string SelectionPolicy::name() const {
  return criterion == Criterion::f1 ? "f1" : "f_beta(" + format_double(beta) + ")";
}

std::array<double, 6> metric_values(const MetricsReport& r) {
  return {r.accuracy, r.balanced_accuracy, r.f1, r.precision, r.recall, r.roc_auc};
}

double weighted_bce(double logit, int label, double w_pos) {
  // -log s(z) = softplus(-z); -log(1 - s(z)) = softplus(z)
  return label == 1 ? w_pos * ag::softplus(-logit) : ag::softplus(logit);
}

double weighted_bce(std::span<const double> logits, std::span<const int> labels, double w_pos) {
  if (logits.size() != labels.size()) throw validation_error("weighted_bce: length mismatch");
  if (logits.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += weighted_bce(logits[i], labels[i], w_pos);
  return sum / static_cast<double>(logits.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels, bool* undefined) {
  if (scores.size() != labels.size()) throw validation_error("roc_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // twice the rank sum of positives keeps tied (half-integer) ranks exact
  double twice_rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_avg_rank = static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) {
      if (labels[order[m]] == 1) {
        twice_rank_sum += twice_avg_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (undefined) *undefined = n_pos == 0.0 || n_neg == 0.0;
  if (n_pos == 0.0 || n_neg == 0.0) return 0.0;
  const double twice_u = twice_rank_sum - n_pos * (n_pos + 1.0);
  return (twice_u / 2.0) / (n_pos * n_neg);
}

double f_beta(double precision, double recall, double beta) {
  if (precision == 0.0 && recall == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * precision * recall / (b2 * precision + recall);
}

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const double> scores,
                              std::span<const int> truth) {
  if (predicted.size() != truth.size() || scores.size() != truth.size()) {
    throw validation_error("compute_metrics: predictions, scores and labels differ in length");
  }
  MetricsReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i];
    const int y = truth[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw validation_error("labels must be 0 or 1");
    if (p == 1 && y == 1) ++r.tp;
    if (p == 1 && y == 0) ++r.fp;
    if (p == 0 && y == 0) ++r.tn;
    if (p == 0 && y == 1) ++r.fn;
  }
  auto ratio = [&](std::size_t num, std::size_t den, const char* name) {
    if (den == 0) {
      r.undefined.emplace_back(name);
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = ratio(r.tp + r.tn, r.size(), "accuracy");
  r.precision = ratio(r.tp, r.tp + r.fp, "precision");
  r.recall = ratio(r.tp, r.tp + r.fn, "recall");
  const double tnr = ratio(r.tn, r.tn + r.fp, "specificity");
  r.balanced_accuracy = (r.recall + tnr) / 2.0;
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.undefined.emplace_back("f1");
  }
  bool auc_undefined = false;
  r.roc_auc = roc_auc(scores, truth, &auc_undefined);
  if (auc_undefined) r.undefined.emplace_back("roc_auc");
  return r;
}

double score(const MetricsReport& r, const SelectionPolicy& policy) {
  return policy.criterion == Criterion::f1 ? r.f1 : f_beta(r.precision, r.recall, policy.beta);
}

void Hyperparameters::validate() const {
  if (!(learning_rate > 0.0)) throw config_error("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw config_error("weight_decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw config_error("dropout must lie in [0, 1)");
  if (epochs < 1) throw config_error("epochs must be at least 1");
  if (batch_size < 1) throw config_error("batch_size must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw config_error("threshold must lie in (0, 1)");
}

double scheduled_lr(double lr0, int epoch, int epochs) {
  return lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(epochs));
}

std::size_t select_epoch(std::span<const EpochRecord> trace, const SelectionPolicy& policy) {
  if (trace.empty()) throw run_error("empty epoch trace");
  std::size_t best = 0;
  double best_score = score(trace[0].selection, policy);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double s = score(trace[i].selection, policy);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

namespace {

std::vector<int> gather(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

double positive_weight_of(std::span<const int> y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(y.size()) - pos;
  if (pos == 0 || neg == 0) throw validation_error("training rows contain a single class");
  return static_cast<double>(neg) / static_cast<double>(pos);
}

MetricsReport evaluate_rows(const models::Model& model, const features::EncodedDataset& data,
                            std::span<const int> labels, std::span<const std::size_t> rows, double threshold) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> scores;
  std::vector<int> preds;
  scores.reserve(rows.size());
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
    const ag::Vector z = model.logits(data.batch(chunk));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double p = ag::sigmoid(z[i]);
      scores.push_back(z[i]);
      preds.push_back(p >= threshold ? 1 : 0);
    }
  }
  const auto truth = gather(labels, rows);
  return compute_metrics(preds, scores, truth);
}

}  // namespace

FoldResult train_fold(const models::ModelConfig& config, const features::EncodedDataset& data,
                      std::span<const int> labels, const FoldSplit& split, const Hyperparameters& hp,
                      const SelectionPolicy& policy, const TrainOptions& options) {
  hp.validate();
  policy.validate();
  if (labels.size() != data.size()) throw validation_error("labels and encoded data differ in length");

  FoldResult result;
  result.fold = split.fold;
  std::vector<std::size_t> fit_rows = split.train;
  std::vector<std::size_t> select_rows = split.heldout;
  if (options.nested) {
    const auto train_labels = gather(labels, split.train);
    const FoldPlan inner = stratified_kfold(train_labels, options.inner_folds, mix_seed(split.seed, 0x5e1ec7));
    fit_rows.clear();
    select_rows.clear();
    for (std::size_t i : inner.folds[0].train) fit_rows.push_back(split.train[i]);
    for (std::size_t i : inner.folds[0].heldout) select_rows.push_back(split.train[i]);
    result.protocol = "nested";
  }

  const auto fit_labels = gather(labels, fit_rows);
  result.positive_weight = options.positive_weight ? *options.positive_weight : positive_weight_of(fit_labels);
  if (!(result.positive_weight > 0.0)) throw config_error("positive weight must be positive");
  result.log.push_back("fold " + std::to_string(split.fold) + ": positive weight " +
                       format_double(result.positive_weight) + ", " + std::to_string(fit_rows.size()) +
                       " training rows, protocol " + result.protocol);

  models::ModelConfig mc = config;
  mc.dropout = hp.dropout;
  mc.seed = mix_seed(config.seed, split.fold);
  auto model = models::make_model(mc);
  nn::AdamW optimizer(model->params());
  Rng order_rng(mix_seed(mc.seed, 1));
  Rng dropout_rng(mix_seed(mc.seed, 2));

  double best_score = -1.0;
  std::vector<std::size_t> order = fit_rows;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = scheduled_lr(hp.learning_rate, epoch, hp.epochs);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch_size)) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min<std::size_t>(hp.batch_size, order.size() - start));
      const features::Batch batch = data.batch(rows);
      ag::Vector y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = labels[rows[i]];
      ag::Graph g;
      const nn::Bound bound = model->params().bind(g);
      const ag::Var z = model->forward(g, bound, batch, hp.dropout > 0.0 ? &dropout_rng : nullptr);
      const ag::Var loss = ag::weighted_bce(g, z, y, result.positive_weight);
      const double value = g.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        throw run_error("non-finite training loss at epoch " + std::to_string(epoch) + " of fold " +
                        std::to_string(split.fold));
      }
      loss_sum += value * static_cast<double>(rows.size());
      g.backward(loss);
      model->params().collect_grads(g, bound);
      optimizer.step(model->params(), lr, hp.weight_decay);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.selection = evaluate_rows(*model, data, labels, select_rows, hp.threshold);
    rec.heldout = options.nested ? evaluate_rows(*model, data, labels, split.heldout, hp.threshold) : rec.selection;
    const double s = score(rec.selection, policy);
    if (s > best_score) {
      best_score = s;
      result.checkpoint = models::snapshot(*model, epoch, policy.name(), s);
    }
    result.trace.push_back(std::move(rec));
  }
  const std::size_t best = select_epoch(result.trace, policy);
  result.best_epoch = static_cast<int>(best);
  result.selection_score = score(result.trace[best].selection, policy);
  result.report = result.trace[best].heldout;
  return result;
}

FoldResult evaluate_baseline_fold(models::Family kind, const features::EncodedDataset& data,
                                  std::span<const int> labels, const FoldSplit& split, bool use_text,
                                  bool use_numeric, double threshold) {
  const auto y_train = gather(labels, split.train);
  const auto y_test = gather(labels, split.heldout);
  models::BaselineOptions opts;
  opts.seed = mix_seed(split.seed, split.fold);
  opts.threshold = threshold;
  FoldResult result;
  result.fold = split.fold;
  if (kind == models::Family::linear) {
    opts.positive_weight = positive_weight_of(y_train);
    result.positive_weight = opts.positive_weight;
  }
  const auto pred = models::fit_predict_baseline(kind, data.flat(split.train, use_text, use_numeric), y_train,
                                                 data.flat(split.heldout, use_text, use_numeric), opts);
  result.report = compute_metrics(pred.labels, pred.scores, y_test);
  result.log.push_back("fold " + std::to_string(split.fold) + ": " + models::to_string(kind) + " baseline");
  return result;
}

AggregateReport aggregate_folds(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw validation_error("no fold reports to aggregate");
  AggregateReport agg;
  agg.folds = reports.size();
  const double n = static_cast<double>(reports.size());
  // Accumulate offsets from the first fold so identical folds give an exact
  // mean and a zero deviation.
  const auto first = metric_values(reports.front());
  std::array<double, 6> mean{}, sq{};
  for (const auto& r : reports) {
    const auto v = metric_values(r);
    for (std::size_t i = 0; i < 6; ++i) mean[i] += v[i] - first[i];
  }
  for (std::size_t i = 0; i < 6; ++i) mean[i] = first[i] + mean[i] / n;
  for (const auto& r : reports) {
    const auto v = metric_values(r);
    for (std::size_t i = 0; i < 6; ++i) sq[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
  }
  auto fill = [](MetricsReport& r, const std::array<double, 6>& v) {
    r.accuracy = v[0];
    r.balanced_accuracy = v[1];
    r.f1 = v[2];
    r.precision = v[3];
    r.recall = v[4];
    r.roc_auc = v[5];
  };
  std::array<double, 6> sd{};
  for (std::size_t i = 0; i < 6; ++i) sd[i] = std::sqrt(sq[i] / n);
  fill(agg.mean, mean);
  fill(agg.stddev, sd);
  for (const auto& r : reports) {
    agg.mean.tp += r.tp;
    agg.mean.fp += r.fp;
    agg.mean.tn += r.tn;
    agg.mean.fn += r.fn;
    for (const auto& u : r.undefined)
      if (std::find(agg.mean.undefined.begin(), agg.mean.undefined.end(), u) == agg.mean.undefined.end())
        agg.mean.undefined.push_back(u);
  }
  return agg;
}

json to_json(const MetricsReport& r) {
  json j;
  const auto v = metric_values(r);
  for (std::size_t i = 0; i < v.size(); ++i) j[kMetricNames[i]] = v[i];
  j["confusion"] = {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
  j["undefined"] = r.undefined;
  return j;
}

json to_json(const AggregateReport& r) {
  json mean, sd;
  const auto m = metric_values(r.mean);
  const auto s = metric_values(r.stddev);
  for (std::size_t i = 0; i < m.size(); ++i) {
    mean[kMetricNames[i]] = m[i];
    sd[kMetricNames[i]] = s[i];
  }
  return {{"folds", r.folds}, {"mean", mean}, {"std", sd}, {"undefined", r.mean.undefined}};
}

}  // namespace viralbench::evaluation
