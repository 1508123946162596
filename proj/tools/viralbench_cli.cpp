#include "viralbench/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace vb = viralbench;
namespace hn = viralbench::harness;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "concurrent folds");
}

hn::ExperimentConfig resolve(const Common& c) {
  hn::ExperimentConfig cfg = hn::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.output = *c.out;
  if (c.workers) cfg.workers = *c.workers;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw vb::run_error("cannot write " + p.string());
  out << text;
}

int ingest(const Common& c) {
  const auto cfg = resolve(c);
  const hn::Dataset data = hn::load_dataset(cfg);
  std::ostringstream corpus_text;
  vb::corpus::ValidationReport report;
  std::string corpus_name;
  if (data.shape == vb::corpus::CorpusShape::article) {
    vb::corpus::LoadOptions opts;
    opts.allow_empty_description = cfg.data.allow_empty_description;
    report = vb::corpus::validate_corpus(data.articles, opts);
    vb::corpus::write_articles(corpus_text, data.articles);
    corpus_name = "articles.jsonl";
  } else {
    report = vb::corpus::validate_corpus(data.series);
    vb::corpus::write_tweet_series(corpus_text, data.series);
    corpus_name = "series.jsonl";
  }
  write_file(cfg.output / corpus_name, corpus_text.str());
  data.store.save(cfg.output / "store.txt");
  write_file(cfg.output / "validation.tsv", vb::corpus::format_report(report));
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << data.size() << " items, " << data.store.size() << " embeddings (dim " << data.store.dim() << "), "
            << report.size() << " violations, dataset " << data.hash() << '\n';
  return report.empty() ? 0 : 3;
}

int label(const Common& c) {
  const auto cfg = resolve(c);
  const hn::Dataset data = hn::load_dataset(cfg);
  std::ostringstream os;
  vb::labeling::write_labels(os, data.labels);
  write_file(cfg.output / "labels.jsonl", os.str());
  const auto diag = vb::labeling::imbalance_diagnostics(data.label_vector());
  std::cout << "prevalence " << vb::format_double(diag.prevalence) << " (" << diag.positives << "/" << diag.n << ")";
  if (diag.positive_weight) std::cout << ", w_pos " << vb::format_double(*diag.positive_weight);
  if (data.labels.rule.threshold_value) std::cout << ", threshold " << vb::format_double(*data.labels.rule.threshold_value);
  std::cout << '\n';
  for (const auto& d : data.labels.diagnostics) std::cerr << "diagnostic " << d.code << ": " << d.detail << '\n';
  return 0;
}

int run(const Common& c) {
  const auto cfg = resolve(c);
  const auto result = hn::run_experiment(cfg);
  std::cout << hn::emit_report({result.row}, hn::ReportFormat::text);
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int ablate(const Common& c, const std::string& views) {
  const auto cfg = resolve(c);
  const auto result = hn::run_ablation(cfg, split_list(views));
  std::vector<hn::TableRow> rows;
  for (const auto& r : result.runs) rows.push_back(r.row);
  std::cout << hn::emit_report(rows, hn::ReportFormat::text);
  return 0;
}

int sweep(const Common& c, const std::string& lengths) {
  const auto cfg = resolve(c);
  std::vector<std::size_t> ls;
  for (const auto& s : split_list(lengths)) {
    try {
      ls.push_back(std::stoul(s));
    } catch (const std::logic_error&) {
      throw vb::config_error("bad length '" + s + "'");
    }
  }
  const auto result = hn::run_length_sweep(cfg, ls);
  std::vector<hn::TableRow> rows;
  for (const auto& r : result.runs) rows.push_back(r.row);
  std::cout << hn::emit_report(rows, hn::ReportFormat::text);
  std::cout << "r(l, F1) = " << vb::format_double(result.r) << (result.zero_variance ? " (zero variance)" : "")
            << '\n';
  return 0;
}

int swap(const Common& c, const std::optional<std::string>& store_a, const std::string& store_b) {
  auto cfg = resolve(c);
  std::optional<fs::path> a = store_a ? std::optional<fs::path>(*store_a) : cfg.data.store;
  if (!a) throw vb::config_error("swap-embeddings needs --store-a or data.store");
  const auto result = hn::run_embedding_swap(cfg, *a, store_b);
  std::cout << hn::emit_report({result.a.row, result.b.row}, hn::ReportFormat::text);
  for (std::size_t i = 0; i < result.delta.size(); ++i) {
    std::cout << "delta " << vb::evaluation::kMetricNames[i] << " = " << vb::format_double(result.delta[i]) << '\n';
  }
  return 0;
}

int report(const std::string& in_dir, const std::optional<std::string>& out_dir) {
  const auto rows = hn::collect_rows(in_dir);
  if (rows.empty()) throw vb::parse_error("no completed manifests under " + in_dir);
  if (out_dir) hn::write_report_files(*out_dir, "report", rows);
  std::cout << hn::emit_report(rows, hn::ReportFormat::text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"viralbench: fake-news and virality benchmark harness"};
  app.require_subcommand(1);

  Common common;
  std::string views = "all,text_only,numeric_only";
  std::string lengths = "2,3,5,10,20,40";
  std::optional<std::string> store_a;
  std::string store_b;
  std::string report_in;

  auto* c_ingest = app.add_subcommand("ingest", "load, validate and canonicalize a corpus and its store");
  add_common(c_ingest, common);
  auto* c_label = app.add_subcommand("label", "derive and write labels");
  add_common(c_label, common);
  auto* c_run = app.add_subcommand("run", "run one cross-validated experiment");
  add_common(c_run, common);
  auto* c_ablate = app.add_subcommand("ablate", "compare input views on a series corpus");
  add_common(c_ablate, common);
  c_ablate->add_option("--views", views, "comma-separated views");
  auto* c_sweep = app.add_subcommand("sweep-length", "vary the series length");
  add_common(c_sweep, common);
  c_sweep->add_option("--lengths", lengths, "comma-separated lengths");
  auto* c_swap = app.add_subcommand("swap-embeddings", "rerun with a second embedding store");
  add_common(c_swap, common);
  c_swap->add_option("--store-a", store_a, "first store (defaults to data.store)");
  c_swap->add_option("--store-b", store_b, "second store")->required();
  auto* c_report = app.add_subcommand("report", "tabulate completed runs");
  add_common(c_report, common, false);
  c_report->add_option("--in", report_in, "directory searched for manifests")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_ingest->parsed()) return ingest(common);
    if (c_label->parsed()) return label(common);
    if (c_run->parsed()) return run(common);
    if (c_ablate->parsed()) return ablate(common, views);
    if (c_sweep->parsed()) return sweep(common, lengths);
    if (c_swap->parsed()) return swap(common, store_a, store_b);
    if (c_report->parsed()) return report(report_in, common.out);
  } catch (const vb::Error& e) {
    std::cerr << e.what() << '\n';
    return vb::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}
