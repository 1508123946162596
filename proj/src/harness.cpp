#include "viralbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace viralbench::harness {

using corpus::CorpusShape;

corpus::ArticleCorpus load_article_source(const DataSource& d, std::vector<std::string>* warnings) {
  corpus::LoadOptions opts;
  opts.allow_empty_description = d.allow_empty_description;
  return corpus::load_articles(*d.corpus, opts, warnings);
}

std::vector<std::string> required_keys(const Dataset& d) {
  std::vector<std::string> keys;
  if (d.shape == CorpusShape::article) {
    for (const auto& a : d.articles) {
      keys.push_back(corpus::title_key(a));
      keys.push_back(corpus::description_key(a));
    }
  } else {
    for (const auto& s : d.series)
      for (const auto& t : s.tweets) keys.push_back(t.id);
  }
  return keys;
}

namespace {

void check_coverage(const Dataset& d, const EmbeddingStore& store, const std::string& what) {
  const auto keys = required_keys(d);
  const auto missing = store.missing(keys);
  if (missing.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
  if (missing.size() > 20) list += ", ...";
  throw lookup_error(what + " lacks " + std::to_string(missing.size()) + " ids: " + list);
}

std::vector<std::pair<std::string, std::string>> id_texts(const Dataset& d) {
  std::vector<std::pair<std::string, std::string>> out;
  if (d.shape == CorpusShape::article) {
    for (const auto& a : d.articles) {
      out.emplace_back(corpus::title_key(a), a.title);
      out.emplace_back(corpus::description_key(a), a.description);
    }
  } else {
    for (const auto& s : d.series)
      for (const auto& t : s.tweets) out.emplace_back(t.id, t.text);
  }
  return out;
}

/// Labels from a file must cover every item and re-derive from their provenance.
labeling::LabelSet labels_from_file(const Dataset& d, const ExperimentConfig& c) {
  std::ifstream in(*c.data.labels);
  if (!in) throw parse_error("cannot open labels " + c.data.labels->string());
  const labeling::LabelSet file = labeling::read_labels(in);
  if (file.rule.task != c.label.task || file.rule.rule != c.label.rule || file.rule.parameter != c.label.parameter) {
    throw config_error("label file provenance does not match the configured label rule");
  }
  const labeling::LabelSet derived = d.shape == CorpusShape::article ? labeling::apply_rule(d.articles, file.rule)
                                                                     : labeling::apply_rule(d.series, file.rule);
  std::unordered_map<std::string, int> by_id;
  for (const auto& inst : file.instances) by_id[inst.item_id] = inst.label;
  for (const auto& inst : derived.instances) {
    auto it = by_id.find(inst.item_id);
    if (it == by_id.end()) throw integrity_error("label file has no label for '" + inst.item_id + "'");
    if (it->second != inst.label) {
      throw integrity_error("label for '" + inst.item_id + "' does not re-derive from its provenance");
    }
  }
  labeling::LabelSet out = derived;
  out.diagnostics = file.diagnostics;
  return out;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& c) {
  c.validate();
  Dataset d;
  d.shape = c.data.shape;
  if (c.data.synthetic) {
    auto syn = corpus::generate_synthetic_corpus(*c.data.synthetic);
    d.articles = std::move(syn.articles);
    d.series = std::move(syn.series);
    d.store = std::move(syn.store);
  } else {
    if (d.shape == CorpusShape::article) {
      d.articles = load_article_source(c.data, &d.warnings);
    } else {
      d.series = corpus::load_tweet_series(*c.data.corpus, &d.warnings);
    }
    if (c.data.store) {
      d.store = EmbeddingStore::load(*c.data.store);
    } else {
      HttpEmbeddingClient client(c.data.embedding_service->options);
      d.store = embed_and_cache(client, id_texts(d), c.data.embedding_service->cache);
    }
  }
  if (d.shape == CorpusShape::article) {
    for (const auto& a : d.articles) d.ids.push_back(a.id);
  } else {
    for (const auto& s : d.series) d.ids.push_back(s.id);
  }
  if (d.ids.empty()) throw validation_error("the corpus is empty");
  check_coverage(d, d.store, "embedding store");

  if (c.data.labels) {
    d.labels = labels_from_file(d, c);
  } else {
    d.labels = d.shape == CorpusShape::article ? labeling::fit_labels(d.articles, c.label)
                                               : labeling::fit_labels(d.series, c.label);
  }
  for (const auto& diag : d.labels.diagnostics) d.warnings.push_back("label " + diag.code + ": " + diag.detail);
  return d;
}

Dataset with_store(const Dataset& base, EmbeddingStore store) {
  check_coverage(base, store, "embedding store");
  Dataset d = base;
  d.store = std::move(store);
  return d;
}

std::string Dataset::hash() const {
  Fnv1a h;
  std::ostringstream os;
  if (shape == CorpusShape::article) {
    corpus::write_articles(os, articles);
  } else {
    corpus::write_tweet_series(os, series);
  }
  h.update(os.str());
  h.update("dim=" + std::to_string(store.dim()));
  for (const auto& key : required_keys(*this)) {
    const auto v = store.lookup(key);
    h.update(key);
    h.update(v.data(), v.size() * sizeof(double));
  }
  for (const auto& inst : labels.instances) h.update(inst.item_id + "=" + std::to_string(inst.label));
  return h.hex();
}

namespace {

std::string describe_model(const ExperimentConfig& c) {
  std::string s = models::to_string(c.family);
  if (c.data.shape == CorpusShape::series) {
    s += "[" + models::to_string(c.view) + ";l=" + std::to_string(*c.length) + "]";
  }
  if (c.selection.criterion == evaluation::Criterion::f_beta) s += " " + c.selection.name();
  return s;
}

std::string describe_dataset(const ExperimentConfig& c) {
  return c.name + "/" + corpus::to_string(c.task);
}

json label_provenance(const labeling::LabelSet& labels) {
  const auto& r = labels.rule;
  json diags = json::array();
  for (const auto& d : labels.diagnostics) diags.push_back({{"code", d.code}, {"detail", d.detail}});
  return {{"task", corpus::to_string(r.task)},
          {"rule", labeling::to_string(r.rule)},
          {"parameter", r.parameter ? json(*r.parameter) : json(nullptr)},
          {"threshold_value", r.threshold_value ? json(*r.threshold_value) : json(nullptr)},
          {"prevalence", labels.prevalence()},
          {"diagnostics", diags}};
}

json trace_json(const std::vector<evaluation::EpochRecord>& trace) {
  json out = json::array();
  for (const auto& e : trace) {
    out.push_back({{"epoch", e.epoch},
                   {"learning_rate", e.learning_rate},
                   {"train_loss", e.train_loss},
                   {"selection", evaluation::to_json(e.selection)},
                   {"heldout", evaluation::to_json(e.heldout)}});
  }
  return out;
}

json row_json(const TableRow& row) {
  return {{"dataset", row.dataset}, {"model", row.model}, {"aggregate", evaluation::to_json(row.aggregate)}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw run_error("cannot write " + path.string());
  out << text;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception
/// (lowest index) is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  return run_experiment(config, load_dataset(config), options);
}

RunResult run_experiment(const ExperimentConfig& config, const Dataset& data, const RunOptions& options) {
  config.validate();
  if (data.shape != config.data.shape) throw config_error("dataset shape does not match the config");
  const std::vector<int> labels = data.label_vector();
  const evaluation::FoldPlan plan = evaluation::stratified_kfold(labels, config.folds, config.seed);

  json config_json = to_json(config);
  config_json.erase("output");
  config_json.erase("workers");

  RunResult result;
  result.row.dataset = describe_dataset(config);
  result.row.model = describe_model(config);
  json& m = result.manifest;
  m["format"] = "viralbench.manifest";
  m["version"] = 1;
  m["config"] = config_json;
  m["dataset"] = {{"hash", data.hash()},
                  {"items", data.size()},
                  {"shape", corpus::to_string(data.shape)},
                  {"embedding_dim", data.store.dim()}};
  m["labels"] = label_provenance(data.labels);
  m["seeds"] = {{"run", config.seed}, {"folds", config.seed}, {"model", mix_seed(config.seed, 0xA11)}};
  m["protocol"] = config.nested ? "nested" : "heldout";
  m["selection"] = {{"policy", config.selection.name()}, {"beta", config.selection.beta}};
  m["warnings"] = data.warnings;
  for (const auto& w : plan.warnings) m["warnings"].push_back(w);
  if (config.family == models::Family::mlp_gating) {
    m["gating_engagement_input"] = "learned affine lift of the source mean log engagement";
  }

  const bool writing = options.write_outputs;
  if (writing) fs::create_directories(config.output / "checkpoints");

  std::vector<evaluation::FoldResult> folds(plan.folds.size());
  std::vector<json> fold_meta(plan.folds.size());
  const bool baseline = models::is_baseline(config.family);
  try {
    parallel_for(plan.folds.size(), config.workers, [&](std::size_t f) {
      const evaluation::FoldSplit& split = plan.folds[f];
      const features::EncodedDataset enc =
          data.shape == CorpusShape::article
              ? features::EncodedDataset::from_articles(data.articles, data.store, split.train)
              : features::EncodedDataset::from_series(data.series, data.store, split.train, *config.length);
      json meta;
      meta["fold"] = f;
      meta["fingerprint"] = evaluation::fold_fingerprint(split, data.ids);
      meta["train_size"] = split.train.size();
      meta["heldout_size"] = split.heldout.size();
      std::size_t heldout_pos = 0;
      for (std::size_t r : split.heldout) heldout_pos += static_cast<std::size_t>(labels[r]);
      meta["heldout_positives"] = heldout_pos;
      json notes = json::array();
      if (!enc.unknown_source_rows().empty()) {
        notes.push_back(std::to_string(enc.unknown_source_rows().size()) +
                        " items use the unknown-source fallback");
      }
      for (const auto& d : enc.transform().diagnostics) notes.push_back(d);

      evaluation::FoldResult fr;
      const bool use_text = config.view != models::InputView::numeric_only;
      const bool use_numeric = config.view != models::InputView::text_only;
      if (baseline) {
        fr = evaluation::evaluate_baseline_fold(config.family, enc, labels, split, use_text, use_numeric,
                                                config.hp.threshold);
        const Eigen::Index width =
            data.shape == CorpusShape::article
                ? static_cast<Eigen::Index>(enc.text_dim())
                : (use_text ? static_cast<Eigen::Index>(enc.text_dim()) : 0) +
                      (use_numeric ? static_cast<Eigen::Index>(features::kNumericFeatures) : 0);
        meta["input_shape"] = {{"length", config.length ? json(*config.length) : json(nullptr)}, {"width", width}};
      } else {
        models::ModelConfig mc;
        mc.family = config.family;
        mc.view = config.view;
        mc.text_dim = static_cast<Eigen::Index>(enc.text_dim());
        mc.max_length = config.length ? static_cast<Eigen::Index>(*config.length) : 0;
        mc.source_count = enc.source_count();
        mc.arch = config.arch;
        mc.dropout = config.hp.dropout;
        mc.seed = mix_seed(config.seed, 0xA11);
        evaluation::TrainOptions to;
        to.nested = config.nested;
        fr = evaluation::train_fold(mc, enc, labels, split, config.hp, config.selection, to);
        meta["input_shape"] = {{"length", config.length ? json(*config.length) : json(nullptr)},
                               {"width", mc.input_dim()}};
        meta["trace"] = trace_json(fr.trace);
        meta["best_epoch"] = fr.best_epoch;
        meta["selection_score"] = fr.selection_score;
        if (writing) {
          char name[32];
          std::snprintf(name, sizeof name, "fold-%02zu.json", f);
          models::save_checkpoint(config.output / "checkpoints" / name, *fr.checkpoint);
          meta["checkpoint"] = std::string("checkpoints/") + name;
        }
      }
      meta["positive_weight"] = fr.positive_weight;
      meta["report"] = evaluation::to_json(fr.report);
      for (const auto& line : fr.log) notes.push_back(line);
      meta["log"] = notes;
      fold_meta[f] = std::move(meta);
      folds[f] = std::move(fr);
    });
  } catch (const std::exception& e) {
    m["status"] = "failed";
    m["error"] = e.what();
    json done = json::array();
    for (const auto& fm : fold_meta)
      if (!fm.is_null()) done.push_back(fm);
    m["folds"] = done;
    if (writing) write_text(config.output / "manifest.json", m.dump(2) + "\n");
    throw;
  }

  std::vector<evaluation::MetricsReport> reports;
  for (const auto& f : folds) reports.push_back(f.report);
  result.row.aggregate = evaluation::aggregate_folds(reports);
  m["status"] = "complete";
  m["folds"] = fold_meta;
  m["aggregate"] = evaluation::to_json(result.row.aggregate);
  m["row"] = row_json(result.row);
  result.folds = std::move(folds);
  if (writing) {
    write_text(config.output / "manifest.json", m.dump(2) + "\n");
    write_report_files(config.output, "results", {result.row});
  }
  return result;
}

AblationResult run_ablation(const ExperimentConfig& base, const std::vector<std::string>& views,
                            const RunOptions& options) {
  base.validate();
  if (base.data.shape != CorpusShape::series) throw config_error("the ablation needs a series corpus");
  if (views.empty()) throw config_error("the ablation needs at least one view");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : views) {
    ExperimentConfig c = base;
    c.view = models::parse_view(v);
    c.view_name = v;
    c.output = base.output / ("view-" + v);
    c.validate();
    configs.push_back(std::move(c));
  }
  const Dataset data = load_dataset(base);
  AblationResult out;
  std::vector<TableRow> rows;
  for (const auto& c : configs) {
    out.runs.push_back(run_experiment(c, data, options));
    rows.push_back(out.runs.back().row);
  }
  if (options.write_outputs) write_report_files(base.output, "ablation", rows);
  return out;
}

SweepResult run_length_sweep(const ExperimentConfig& base, const std::vector<std::size_t>& lengths,
                             const RunOptions& options) {
  base.validate();
  if (base.data.shape != CorpusShape::series) throw config_error("the length sweep needs a series corpus");
  if (lengths.size() < 2) throw config_error("the length sweep needs at least two lengths");
  const Dataset data = load_dataset(base);
  SweepResult out;
  out.lengths = lengths;
  std::vector<TableRow> rows;
  std::vector<double> xs, ys;
  for (std::size_t len : lengths) {
    ExperimentConfig c = base;
    c.length = len;
    c.output = base.output / ("length-" + std::to_string(len));
    out.runs.push_back(run_experiment(c, data, options));
    rows.push_back(out.runs.back().row);
    xs.push_back(static_cast<double>(len));
    ys.push_back(out.runs.back().row.aggregate.mean.f1);
  }
  out.r = pearson_r(xs, ys, &out.zero_variance);
  if (options.write_outputs) {
    write_report_files(base.output, "sweep", rows);
    const json summary = {{"lengths", lengths}, {"f1", ys}, {"pearson_r", out.r}, {"zero_variance", out.zero_variance}};
    write_text(base.output / "sweep.json", summary.dump(2) + "\n");
  }
  return out;
}

SwapResult run_embedding_swap(const ExperimentConfig& base, const fs::path& store_a, const fs::path& store_b,
                              const RunOptions& options) {
  ExperimentConfig c = base;
  c.data.store = store_a;
  c.data.embedding_service.reset();
  if (c.data.synthetic) throw config_error("the embedding swap needs a corpus file");
  const Dataset data = load_dataset(c);
  return run_embedding_swap(c, data, EmbeddingStore::load(store_b), options);
}

SwapResult run_embedding_swap(const ExperimentConfig& base, const Dataset& data, const EmbeddingStore& store_b,
                              const RunOptions& options) {
  base.validate();
  const Dataset other = with_store(data, store_b);
  ExperimentConfig ca = base;
  ca.output = base.output / "store-a";
  ExperimentConfig cb = base;
  cb.output = base.output / "store-b";
  SwapResult out;
  out.a = run_experiment(ca, data, options);
  out.b = run_experiment(cb, other, options);
  const auto va = evaluation::metric_values(out.a.row.aggregate.mean);
  const auto vb = evaluation::metric_values(out.b.row.aggregate.mean);
  for (std::size_t i = 0; i < va.size(); ++i) out.delta[i] = vb[i] - va[i];
  if (options.write_outputs) {
    TableRow ra = out.a.row, rb = out.b.row;
    ra.model += " dim=" + std::to_string(data.store.dim());
    rb.model += " dim=" + std::to_string(store_b.dim());
    write_report_files(base.output, "swap", {ra, rb});
    json delta;
    for (std::size_t i = 0; i < va.size(); ++i) delta[evaluation::kMetricNames[i]] = out.delta[i];
    write_text(base.output / "swap.json",
               json({{"dim_a", data.store.dim()}, {"dim_b", store_b.dim()}, {"delta", delta}}).dump(2) + "\n");
  }
  return out;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys, bool* zero_variance) {
  if (xs.size() != ys.size()) throw validation_error("pearson_r: length mismatch");
  if (xs.size() < 2) throw validation_error("pearson_r needs at least two points");
  const bool flat = std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs[0]; }) ||
                    std::all_of(ys.begin(), ys.end(), [&](double y) { return y == ys[0]; });
  if (zero_variance) *zero_variance = flat;
  if (flat) return 0.0;
  // Offsets from the first point keep a nearly flat series from picking up
  // rounding noise in the means.
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] - xs[0];
    my += ys[i] - ys[0];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - xs[0] - mx;
    const double dy = ys[i] - ys[0] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace viralbench::harness
