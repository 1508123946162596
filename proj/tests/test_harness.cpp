#include "oracles.hpp"
#include "test_util.hpp"
#include "viralbench/harness.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace viralbench;
using namespace viralbench::harness;

namespace {

json small_arch() {
  return {{"head_hidden", 8}, {"recurrent_units", 4}, {"conv_channels", 4}, {"model_width", 8},
          {"heads", 2},       {"ffn_width", 8},       {"projection_width", 4}, {"source_embedding", 3}};
}

json synthetic(std::size_t n, double rate = 0.5) {
  return {{"n_items", n},
          {"positive_rate", rate},
          {"text_signal_strength", 1.5},
          {"numeric_signal_strength", 0.5},
          {"embedding_dim", 6},
          {"series_length_range", {1, 5}},
          {"seed", 4},
          {"signal_placement", "every_tweet"},
          {"n_sources", 0}};
}

/// A complete, valid article config; tests mutate it.
json article_config(const std::string& family = "mlp") {
  return {{"name", "synthetic-articles"},
          {"data",
           {{"shape", "article"},
            {"corpus", nullptr},
            {"store", nullptr},
            {"labels", nullptr},
            {"synthetic", synthetic(120)},
            {"embedding_service", nullptr},
            {"allow_empty_description", false}}},
          {"task", "veracity"},
          {"label", {{"rule", "passthrough"}, {"parameter", nullptr}}},
          {"view", "all"},
          {"model", {{"family", family}, {"architecture", small_arch()}}},
          {"profile", "custom"},
          {"hyperparameters",
           {{"learning_rate", 0.003}, {"weight_decay", 0.01}, {"dropout", 0.1}, {"epochs", 3}, {"batch_size", 32}}},
          {"threshold", 0.5},
          {"length", nullptr},
          {"selection", {{"criterion", "f1"}, {"beta", 2.0}}},
          {"folds", 3},
          {"protocol", "heldout"},
          {"seed", 5},
          {"output", "out"},
          {"workers", 1}};
}

json series_config(const std::string& family = "gru") {
  json j = article_config(family);
  j["name"] = "synthetic-series";
  j["data"]["shape"] = "series";
  j["data"]["synthetic"] = synthetic(90);
  j["length"] = 4;
  return j;
}

ErrorKind parse_kind(const json& j) {
  return testutil::error_kind([&] { parse_config(j).validate(); });
}

RunOptions no_files() {
  RunOptions o;
  o.write_outputs = false;
  return o;
}

}  // namespace

TEST(Config, ValidConfigsParse) {
  const auto c = parse_config(article_config());
  EXPECT_EQ(c.family, models::Family::mlp);
  EXPECT_EQ(c.folds, 3u);
  EXPECT_EQ(c.hp.epochs, 3);
  const auto s = parse_config(series_config());
  EXPECT_EQ(s.length, 4u);
  EXPECT_EQ(s.data.shape, corpus::CorpusShape::series);
}

TEST(Config, MissingFieldIsConfigError) {
  for (const char* key : {"name", "task", "seed", "selection", "length", "protocol"}) {
    json j = article_config();
    j.erase(key);
    EXPECT_EQ(parse_kind(j), ErrorKind::config) << key;
  }
  json j = article_config();
  j["selection"].erase("beta");
  EXPECT_EQ(parse_kind(j), ErrorKind::config);
}

TEST(Config, UnknownFieldIsConfigError) {
  json j = article_config();
  j["learning_rate"] = 0.1;
  std::string msg;
  EXPECT_EQ(testutil::error_kind([&] { parse_config(j); }, &msg), ErrorKind::config);
  EXPECT_NE(msg.find("learning_rate"), std::string::npos);
  json k = article_config();
  k["model"]["depth"] = 3;
  EXPECT_EQ(parse_kind(k), ErrorKind::config);
}

TEST(Config, Profiles) {
  json j = article_config();
  j["profile"] = "evons";
  EXPECT_EQ(parse_kind(j), ErrorKind::config);  // profile plus explicit hyperparameters
  j["hyperparameters"] = nullptr;
  const auto evons = parse_config(j);
  EXPECT_EQ(evons.hp.learning_rate, 1e-4);
  EXPECT_EQ(evons.hp.weight_decay, 0.01);
  EXPECT_EQ(evons.hp.dropout, 0.1);
  EXPECT_EQ(evons.hp.epochs, 50);
  j["profile"] = "fakenewsnet";
  const auto fnn = parse_config(j);
  EXPECT_EQ(fnn.hp.learning_rate, 8e-5);
  EXPECT_EQ(fnn.hp.epochs, 100);
  json k = article_config();
  k["hyperparameters"] = nullptr;
  EXPECT_EQ(parse_kind(k), ErrorKind::config);  // custom needs every field
}

TEST(Config, ViewMustMatchCorpusShape) {
  json j = article_config("gru");
  j["length"] = 3;
  EXPECT_EQ(parse_kind(j), ErrorKind::config);
  json k = article_config();
  k["view"] = "numeric_only";
  EXPECT_EQ(parse_kind(k), ErrorKind::config);
  json s = series_config("mlp");
  EXPECT_EQ(parse_kind(s), ErrorKind::config);
  json l = series_config();
  l["length"] = nullptr;
  EXPECT_EQ(parse_kind(l), ErrorKind::config);
  json g = article_config();
  g["view"] = "+gating";
  EXPECT_EQ(parse_config(g).family, models::Family::mlp_gating);
}

TEST(Config, RoundTripsThroughJson) {
  const auto c = parse_config(series_config());
  const auto again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
}

TEST(RunExperiment, TransformerRowSchema) {
  json j = series_config("transformer");
  const auto r = run_experiment(parse_config(j), no_files());
  EXPECT_EQ(r.row.aggregate.folds, 3u);
  for (double v : evaluation::metric_values(r.row.aggregate.mean)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(r.manifest["status"], "complete");
  EXPECT_EQ(r.manifest["folds"].size(), 3u);
  EXPECT_TRUE(r.manifest["dataset"].contains("hash"));
  EXPECT_EQ(r.manifest["labels"]["rule"], "passthrough");
}

TEST(RunExperiment, FixedSeedIsByteIdentical) {
  for (const json& j : {article_config("mlp"), series_config("gru"), article_config("linear")}) {
    const auto cfg = parse_config(j);
    const auto a = run_experiment(cfg, no_files());
    const auto b = run_experiment(cfg, no_files());
    EXPECT_EQ(a.manifest.dump(), b.manifest.dump());
    EXPECT_EQ(emit_report({a.row}, ReportFormat::csv), emit_report({b.row}, ReportFormat::csv));
  }
}

TEST(RunExperiment, WorkersDoNotChangeResults) {
  auto cfg = parse_config(article_config("mlp"));
  const auto a = run_experiment(cfg, no_files());
  cfg.workers = 3;
  const auto b = run_experiment(cfg, no_files());
  EXPECT_EQ(a.manifest.dump(), b.manifest.dump());
}

TEST(RunExperiment, DummyAtFivePercent) {
  // Dummy-stratified F1 0.049 at about 5% prevalence in the virality benchmark.
  json j = article_config("dummy_stratified");
  j["task"] = "virality";
  j["label"] = {{"rule", "percentile_threshold"}, {"parameter", 95}};
  j["data"]["synthetic"] = synthetic(4000, 0.05);
  j["folds"] = 10;
  const auto r = run_experiment(parse_config(j), no_files());
  EXPECT_GE(r.row.aggregate.mean.f1, 0.02);
  EXPECT_LE(r.row.aggregate.mean.f1, 0.08);
  EXPECT_NEAR(r.manifest["labels"]["prevalence"].get<double>(), 0.05, 0.01);
}

TEST(RunExperiment, WritesManifestCheckpointsAndTables) {
  const auto dir = testutil::scratch_dir("run");
  auto cfg = parse_config(series_config("cnn"));
  cfg.output = dir;
  const auto r = run_experiment(cfg);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "results.txt"));
  EXPECT_TRUE(fs::exists(dir / "results.csv"));
  for (const auto& fold : r.manifest["folds"]) {
    const auto ck = models::load_checkpoint(dir / fold["checkpoint"].get<std::string>());
    EXPECT_EQ(ck.epoch, fold["best_epoch"].get<int>());
  }
  const auto rows = collect_rows(dir);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].model, r.row.model);
  EXPECT_NEAR(rows[0].aggregate.mean.f1, r.row.aggregate.mean.f1, 1e-15);
}

TEST(RunExperiment, FailureLeavesPartialManifest) {
  const auto dir = testutil::scratch_dir("fail");
  json j = article_config("mlp");
  j["hyperparameters"]["learning_rate"] = 1e305;
  auto cfg = parse_config(j);
  cfg.output = dir;
  EXPECT_EQ(testutil::error_kind([&] { run_experiment(cfg); }), ErrorKind::run);
  std::ifstream in(dir / "manifest.json");
  const auto m = json::parse(in);
  EXPECT_EQ(m["status"], "failed");
  EXPECT_TRUE(m.contains("error"));
  EXPECT_TRUE(collect_rows(dir).empty());
}

TEST(Ablation, ViewsShareFoldsAndNumericOnlyIsProjectionWide) {
  json j = series_config("gru");
  j["model"]["architecture"]["projection_width"] = 32;
  const auto result = run_ablation(parse_config(j), {"all", "text_only", "numeric_only"}, no_files());
  ASSERT_EQ(result.runs.size(), 3u);
  for (std::size_t f = 0; f < 3; ++f) {
    const auto fp = result.runs[0].manifest["folds"][f]["fingerprint"];
    EXPECT_EQ(result.runs[1].manifest["folds"][f]["fingerprint"], fp);
    EXPECT_EQ(result.runs[2].manifest["folds"][f]["fingerprint"], fp);
    EXPECT_EQ(result.runs[0].manifest["folds"][f]["input_shape"]["width"], 6 + 32);
    EXPECT_EQ(result.runs[1].manifest["folds"][f]["input_shape"]["width"], 6);
    EXPECT_EQ(result.runs[2].manifest["folds"][f]["input_shape"]["width"], 32);
  }
  EXPECT_EQ(result.runs[0].manifest["seeds"], result.runs[2].manifest["seeds"]);
}

TEST(Ablation, NeedsSeriesCorpus) {
  EXPECT_EQ(testutil::error_kind([] { run_ablation(parse_config(article_config()), {"all"}, no_files()); }),
            ErrorKind::config);
}

TEST(Sweep, LengthBookkeepingAndCorrelation) {
  json j = series_config("cnn");
  const std::vector<std::size_t> lengths = {1, 2, 5};
  const auto s = run_length_sweep(parse_config(j), lengths, no_files());
  ASSERT_EQ(s.runs.size(), 3u);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < 3; ++i) {
    for (const auto& fold : s.runs[i].manifest["folds"]) EXPECT_EQ(fold["input_shape"]["length"], lengths[i]);
    EXPECT_EQ(s.runs[i].manifest["config"]["length"], lengths[i]);
    xs.push_back(static_cast<double>(lengths[i]));
    ys.push_back(s.runs[i].row.aggregate.mean.f1);
  }
  if (!s.zero_variance) EXPECT_NEAR(s.r, oracle::sample_pearson(xs, ys), 1e-12);
}

TEST(Pearson, Examples) {
  const std::vector<double> x = {1, 2, 3, 4};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 1);
  EXPECT_NEAR(pearson_r(x, y), 1.0, 1e-15);
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  EXPECT_NEAR(pearson_r(x, neg), -1.0, 1e-15);
  EXPECT_NEAR(pearson_r(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-15);
  bool flat = false;
  EXPECT_EQ(pearson_r(x, std::vector<double>{0.7, 0.7, 0.7, 0.7}, &flat), 0.0);
  EXPECT_TRUE(flat);
  // Six copies of a value whose running mean does not round back to itself.
  const std::vector<double> lengths = {2, 3, 5, 10, 20, 40};
  flat = false;
  EXPECT_EQ(pearson_r(lengths, std::vector<double>(6, 0.995), &flat), 0.0);
  EXPECT_TRUE(flat);
  EXPECT_EQ(testutil::error_kind([] { pearson_r(std::vector<double>{1, 2}, std::vector<double>{1}); }),
            ErrorKind::validation);
}

TEST(Pearson, MatchesOracle) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(2 + rng.below(10)), y;
    for (double& v : x) {
      v = rng.normal();
      y.push_back(v * rng.uniform(-1, 1) + rng.normal());
    }
    EXPECT_NEAR(pearson_r(x, y), oracle::sample_pearson(x, y), 1e-12);
  }
}

namespace {

TableRow row(const std::string& dataset, const std::string& model, std::array<double, 6> v) {
  TableRow r;
  r.dataset = dataset;
  r.model = model;
  r.aggregate.folds = 10;
  r.aggregate.mean.accuracy = v[0];
  r.aggregate.mean.balanced_accuracy = v[1];
  r.aggregate.mean.f1 = v[2];
  r.aggregate.mean.precision = v[3];
  r.aggregate.mean.recall = v[4];
  r.aggregate.mean.roc_auc = v[5];
  return r;
}

/// Fake-news block of the FakeNewsNet (Politifact) benchmark table.
std::vector<TableRow> fakenewsnet_block() {
  const std::string d = "Politifact/fake-news";
  return {row(d, "Transformer", {0.945, 0.927, 0.906, 0.933, 0.883, 0.965}),
          row(d, "GRU", {0.935, 0.918, 0.891, 0.912, 0.874, 0.961}),
          row(d, "RNN", {0.941, 0.926, 0.901, 0.919, 0.886, 0.963}),
          row(d, "LSTM", {0.936, 0.916, 0.891, 0.921, 0.866, 0.963}),
          row(d, "CNN", {0.928, 0.904, 0.876, 0.912, 0.846, 0.962}),
          row(d, "Logistic Regression", {0.939, 0.929, 0.899, 0.896, 0.906, 0.971}),
          row(d, "Random Forest", {0.920, 0.893, 0.861, 0.902, 0.826, 0.956}),
          row(d, "Dummy (stratified)", {0.578, 0.499, 0.300, 0.300, 0.300, 0.499})};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t column_start(const std::string& header, const std::string& title) { return header.find(title); }

}  // namespace

TEST(Report, SingleRowHasNoMarkers) {
  const auto text = emit_report({row("d", "m", {0.5, 0.5, 0.5, 0.5, 0.5, 0.5})}, ReportFormat::text);
  const auto lines = lines_of(text);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(text.find('*'), std::string::npos);
  for (const char* t : {"Acc", "BalAcc", "F1", "Prec", "Rec", "ROC-AUC"}) EXPECT_NE(lines[0].find(t), std::string::npos);
  EXPECT_LT(lines[0].find("BalAcc"), lines[0].find("F1"));
  EXPECT_LT(lines[0].find("Rec"), lines[0].find("ROC-AUC"));
}

TEST(Report, FakeNewsNetBlockMarksTransformerF1) {
  const auto lines = lines_of(emit_report(fakenewsnet_block(), ReportFormat::text));
  ASSERT_EQ(lines.size(), 9u);
  const auto f1_col = column_start(lines[0], "F1");
  const auto prec_col = column_start(lines[0], "Prec");
  auto f1_cell = [&](const std::string& l) { return l.substr(f1_col, prec_col - f1_col); };
  EXPECT_NE(f1_cell(lines[1]).find('*'), std::string::npos);
  EXPECT_NE(lines[1].find("Transformer"), std::string::npos);
  for (std::size_t i = 2; i < lines.size(); ++i) EXPECT_EQ(f1_cell(lines[i]).find('*'), std::string::npos) << lines[i];
  // Logistic regression holds the recall and AUC maxima.
  EXPECT_EQ(std::count(lines[6].begin(), lines[6].end(), '*'), 3);
}

TEST(Report, CsvRoundTrip) {
  auto rows = fakenewsnet_block();
  Rng rng(2);
  for (auto& r : rows) {
    r.aggregate.mean.f1 = rng.uniform();
    r.aggregate.stddev.f1 = rng.uniform() * 0.1;
  }
  rows[0].model = "mlp, with \"quotes\"";
  const auto back = parse_report_csv(emit_report(rows, ReportFormat::csv));
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].dataset, rows[i].dataset);
    EXPECT_EQ(back[i].model, rows[i].model);
    EXPECT_EQ(back[i].aggregate.folds, rows[i].aggregate.folds);
    const auto a = evaluation::metric_values(back[i].aggregate.mean);
    const auto b = evaluation::metric_values(rows[i].aggregate.mean);
    const auto sa = evaluation::metric_values(back[i].aggregate.stddev);
    const auto sb = evaluation::metric_values(rows[i].aggregate.stddev);
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_NEAR(a[k], b[k], 5e-7);
      EXPECT_NEAR(sa[k], sb[k], 5e-7);
    }
  }
}

TEST(Swap, IdentityGivesZeroDelta) {
  const auto cfg = parse_config(article_config("mlp"));
  const auto data = load_dataset(cfg);
  const auto s = run_embedding_swap(cfg, data, data.store, no_files());
  for (double d : s.delta) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(s.a.manifest["folds"].dump(), s.b.manifest["folds"].dump());
}

TEST(Swap, CoverageGapListsMissingIds) {
  const auto cfg = parse_config(article_config("mlp"));
  const auto data = load_dataset(cfg);
  EmbeddingStore partial(data.store.dim());
  for (std::size_t i = 0; i < data.store.ids().size(); ++i) {
    const auto& id = data.store.ids()[i];
    if (id == "a3/title" || id == "a7/description") continue;
    partial.insert(id, data.store.lookup(id));
  }
  std::string msg;
  EXPECT_EQ(testutil::error_kind([&] { run_embedding_swap(cfg, data, partial, no_files()); }, &msg),
            ErrorKind::lookup);
  EXPECT_NE(msg.find("a3/title"), std::string::npos);
  EXPECT_NE(msg.find("a7/description"), std::string::npos);
}

TEST(Dataset, LoadsFromFilesAndChecksLabels) {
  const auto dir = testutil::scratch_dir("files");
  json j = article_config("linear");
  j["task"] = "virality";
  j["label"] = {{"rule", "percentile_threshold"}, {"parameter", 80}};
  const auto synth_cfg = parse_config(j);
  const auto synth = load_dataset(synth_cfg);
  {
    std::ofstream a(dir / "articles.jsonl");
    corpus::write_articles(a, synth.articles);
    synth.store.save(dir / "store.txt");
    std::ofstream l(dir / "labels.jsonl");
    labeling::write_labels(l, synth.labels);
  }
  j["data"]["synthetic"] = nullptr;
  j["data"]["corpus"] = "articles.jsonl";
  j["data"]["store"] = "store.txt";
  j["data"]["labels"] = "labels.jsonl";
  {
    std::ofstream c(dir / "config.json");
    c << j.dump(2);
  }
  const auto cfg = load_config(dir / "config.json");
  const auto files = load_dataset(cfg);
  EXPECT_EQ(files.hash(), synth.hash());
  EXPECT_EQ(run_experiment(cfg, files, no_files()).manifest["folds"].dump(),
            run_experiment(synth_cfg, synth, no_files()).manifest["folds"].dump());

  // A tampered label no longer re-derives from its provenance.
  auto tampered = synth.labels;
  tampered.instances[0].label = 1 - tampered.instances[0].label;
  {
    std::ofstream l(dir / "labels.jsonl");
    labeling::write_labels(l, tampered);
  }
  EXPECT_EQ(testutil::error_kind([&] { load_dataset(cfg); }), ErrorKind::integrity);
}
