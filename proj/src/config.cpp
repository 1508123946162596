#include "viralbench/harness.hpp"

#include <fstream>
#include <set>

namespace viralbench::harness {

namespace {

/// Object with exactly these keys (null values allowed).
void require_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) throw config_error("unknown field '" + k + "' in " + where);
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw config_error("missing field '" + k + "' in " + where);
  }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("field '" + key + "' in " + where + " has the wrong type");
  }
}

std::optional<fs::path> optional_path(const json& j, const std::string& key, const std::string& where,
                                      const fs::path& base) {
  if (j.at(key).is_null()) return std::nullopt;
  fs::path p = get<std::string>(j, key, where);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

corpus::SyntheticSpec parse_synthetic(const json& j) {
  const std::string where = "data.synthetic";
  require_keys(j,
               {"n_items", "positive_rate", "text_signal_strength", "numeric_signal_strength", "embedding_dim",
                "series_length_range", "seed", "signal_placement", "n_sources"},
               where);
  corpus::SyntheticSpec s;
  s.n_items = get<std::size_t>(j, "n_items", where);
  s.positive_rate = get<double>(j, "positive_rate", where);
  s.text_signal_strength = get<double>(j, "text_signal_strength", where);
  s.numeric_signal_strength = get<double>(j, "numeric_signal_strength", where);
  s.embedding_dim = get<std::size_t>(j, "embedding_dim", where);
  const auto range = get<std::vector<std::size_t>>(j, "series_length_range", where);
  if (range.size() != 2) throw config_error("series_length_range must be [min, max]");
  s.min_length = range[0];
  s.max_length = range[1];
  s.seed = get<std::uint64_t>(j, "seed", where);
  const auto placement = get<std::string>(j, "signal_placement", where);
  if (placement == "every_tweet") {
    s.placement = corpus::SignalPlacement::every_tweet;
  } else if (placement == "first_tweet") {
    s.placement = corpus::SignalPlacement::first_tweet;
  } else {
    throw config_error("signal_placement must be every_tweet or first_tweet");
  }
  s.n_sources = get<std::size_t>(j, "n_sources", where);
  return s;
}

json synthetic_json(const corpus::SyntheticSpec& s) {
  return {{"n_items", s.n_items},
          {"positive_rate", s.positive_rate},
          {"text_signal_strength", s.text_signal_strength},
          {"numeric_signal_strength", s.numeric_signal_strength},
          {"embedding_dim", s.embedding_dim},
          {"series_length_range", {s.min_length, s.max_length}},
          {"seed", s.seed},
          {"signal_placement", s.placement == corpus::SignalPlacement::first_tweet ? "first_tweet" : "every_tweet"},
          {"n_sources", s.n_sources}};
}

EmbeddingServiceConfig parse_service(const json& j, const fs::path& base) {
  const std::string where = "data.embedding_service";
  require_keys(j, {"host", "port", "path", "batch_size", "timeout_seconds", "cache"}, where);
  EmbeddingServiceConfig s;
  s.options.host = get<std::string>(j, "host", where);
  s.options.port = get<int>(j, "port", where);
  s.options.path = get<std::string>(j, "path", where);
  s.options.batch_size = get<std::size_t>(j, "batch_size", where);
  s.options.timeout_seconds = get<int>(j, "timeout_seconds", where);
  s.cache = *optional_path(j, "cache", where, base);
  if (s.options.batch_size == 0) throw config_error("embedding_service.batch_size must be positive");
  return s;
}

models::Architecture parse_architecture(const json& j, std::string& name) {
  if (j.is_string()) {
    name = j.get<std::string>();
    if (name != "paper") throw config_error("model.architecture must be \"paper\" or an object of layer sizes");
    return models::paper_architecture();
  }
  const std::string where = "model.architecture";
  require_keys(j,
               {"head_hidden", "recurrent_units", "conv_channels", "model_width", "heads", "ffn_width",
                "projection_width", "source_embedding"},
               where);
  name = "custom";
  models::Architecture a;
  a.head_hidden = get<Eigen::Index>(j, "head_hidden", where);
  a.recurrent_units = get<Eigen::Index>(j, "recurrent_units", where);
  a.conv_channels = get<Eigen::Index>(j, "conv_channels", where);
  a.model_width = get<Eigen::Index>(j, "model_width", where);
  a.heads = get<Eigen::Index>(j, "heads", where);
  a.ffn_width = get<Eigen::Index>(j, "ffn_width", where);
  a.projection_width = get<Eigen::Index>(j, "projection_width", where);
  a.source_embedding = get<Eigen::Index>(j, "source_embedding", where);
  return a;
}

struct ResolvedView {
  models::Family family;
  models::InputView view;
};

/// "+source_emb" and friends select the article-head variant.
ResolvedView resolve_view(models::Family family, const std::string& view) {
  using models::Family;
  static const std::pair<const char*, Family> variants[] = {
      {"+source_emb", Family::mlp_source_emb}, {"+avg_eng", Family::mlp_avg_eng}, {"+gating", Family::mlp_gating}};
  for (const auto& [name, variant] : variants) {
    if (view == name) {
      if (family != Family::mlp && family != variant) {
        throw config_error("view " + view + " needs model family mlp or " + models::to_string(variant));
      }
      return {variant, models::InputView::all};
    }
  }
  const auto v = models::parse_view(view);
  if (family != Family::mlp && models::is_article_head(family) && v != models::InputView::all) {
    throw config_error("view " + view + " does not apply to " + models::to_string(family));
  }
  return {family, v};
}

}  // namespace

evaluation::Hyperparameters profile_hyperparameters(const std::string& profile) {
  evaluation::Hyperparameters hp;
  if (profile == "evons") {
    hp.learning_rate = 1e-4;
    hp.weight_decay = 0.01;
    hp.dropout = 0.1;
    hp.epochs = 50;
  } else if (profile == "fakenewsnet") {
    hp.learning_rate = 8e-5;
    hp.weight_decay = 0.01;
    hp.dropout = 0.1;
    hp.epochs = 100;
  } else {
    throw config_error("unknown hyperparameter profile '" + profile + "'");
  }
  hp.batch_size = 32;
  return hp;
}

void ExperimentConfig::validate() const {
  using corpus::CorpusShape;
  if (name.empty()) throw config_error("name must be non-empty");
  label.validate();
  if (label.task != task) throw config_error("label task does not match experiment task");
  if (data.corpus.has_value() == data.synthetic.has_value()) {
    throw config_error("data needs exactly one of corpus or synthetic");
  }
  if (data.corpus && !data.store && !data.embedding_service) {
    throw config_error("a corpus file needs an embedding store or an embedding service");
  }
  if (data.synthetic) data.synthetic->validate();
  if (data.synthetic && data.labels) throw config_error("synthetic corpora derive their own labels");
  const bool series = data.shape == CorpusShape::series;
  if (models::is_sequence(family) && !series) {
    throw config_error(models::to_string(family) + " needs a series corpus");
  }
  if (models::is_article_head(family) && series) {
    throw config_error(models::to_string(family) + " needs an article corpus");
  }
  if (!series && view == models::InputView::numeric_only) {
    throw config_error("the numeric_only view needs a series corpus");
  }
  if (series && length.value_or(0) < 1) throw config_error("series experiments need length >= 1");
  if (!series && length) throw config_error("length applies to series corpora only; set it to null");
  hp.validate();
  selection.validate();
  if (folds < 2) throw config_error("folds must be at least 2");
  if (workers < 1) throw config_error("workers must be at least 1");
}

ExperimentConfig parse_config(const json& j, const fs::path& base) {
  require_keys(j,
               {"name", "data", "task", "label", "view", "model", "profile", "hyperparameters", "threshold", "length",
                "selection", "folds", "protocol", "seed", "output", "workers"},
               "config");
  ExperimentConfig c;
  c.name = get<std::string>(j, "name", "config");

  const json& d = j.at("data");
  require_keys(d,
               {"shape", "corpus", "store", "labels", "synthetic", "embedding_service", "allow_empty_description"},
               "data");
  c.data.shape = corpus::parse_shape(get<std::string>(d, "shape", "data"));
  c.data.corpus = optional_path(d, "corpus", "data", base);
  c.data.store = optional_path(d, "store", "data", base);
  c.data.labels = optional_path(d, "labels", "data", base);
  c.data.allow_empty_description = get<bool>(d, "allow_empty_description", "data");
  if (!d.at("embedding_service").is_null()) c.data.embedding_service = parse_service(d.at("embedding_service"), base);

  c.task = corpus::parse_task(get<std::string>(j, "task", "config"));
  if (!d.at("synthetic").is_null()) {
    c.data.synthetic = parse_synthetic(d.at("synthetic"));
    c.data.synthetic->task = c.task;
    c.data.synthetic->shape = c.data.shape;
  }

  const json& l = j.at("label");
  require_keys(l, {"rule", "parameter"}, "label");
  c.label.task = c.task;
  c.label.rule = labeling::parse_rule(get<std::string>(l, "rule", "label"));
  if (!l.at("parameter").is_null()) c.label.parameter = get<double>(l, "parameter", "label");
  if (c.label.rule != labeling::Rule::percentile_threshold && c.label.parameter) {
    throw config_error("label.parameter applies to percentile_threshold only; set it to null");
  }

  const json& m = j.at("model");
  require_keys(m, {"family", "architecture"}, "model");
  c.arch = parse_architecture(m.at("architecture"), c.architecture_name);
  c.view_name = get<std::string>(j, "view", "config");
  const auto resolved = resolve_view(models::parse_family(get<std::string>(m, "family", "model")), c.view_name);
  c.family = resolved.family;
  c.view = resolved.view;

  c.profile = get<std::string>(j, "profile", "config");
  const json& h = j.at("hyperparameters");
  if (c.profile == "custom") {
    if (h.is_null()) throw config_error("profile custom needs a hyperparameters object");
    require_keys(h, {"learning_rate", "weight_decay", "dropout", "epochs", "batch_size"}, "hyperparameters");
    c.hp.learning_rate = get<double>(h, "learning_rate", "hyperparameters");
    c.hp.weight_decay = get<double>(h, "weight_decay", "hyperparameters");
    c.hp.dropout = get<double>(h, "dropout", "hyperparameters");
    c.hp.epochs = get<int>(h, "epochs", "hyperparameters");
    c.hp.batch_size = get<int>(h, "batch_size", "hyperparameters");
  } else {
    if (!h.is_null()) throw config_error("hyperparameters must be null unless profile is custom");
    c.hp = profile_hyperparameters(c.profile);
  }
  c.hp.threshold = get<double>(j, "threshold", "config");

  if (!j.at("length").is_null()) c.length = get<std::size_t>(j, "length", "config");

  const json& s = j.at("selection");
  require_keys(s, {"criterion", "beta"}, "selection");
  const auto criterion = get<std::string>(s, "criterion", "selection");
  if (criterion == "f1") {
    c.selection.criterion = evaluation::Criterion::f1;
  } else if (criterion == "f_beta") {
    c.selection.criterion = evaluation::Criterion::f_beta;
  } else {
    throw config_error("selection.criterion must be f1 or f_beta");
  }
  c.selection.beta = get<double>(s, "beta", "selection");

  c.folds = get<std::size_t>(j, "folds", "config");
  const auto protocol = get<std::string>(j, "protocol", "config");
  if (protocol != "heldout" && protocol != "nested") throw config_error("protocol must be heldout or nested");
  c.nested = protocol == "nested";
  c.seed = get<std::uint64_t>(j, "seed", "config");
  c.output = get<std::string>(j, "output", "config");
  if (c.output.is_relative() && !base.empty()) c.output = base / c.output;
  c.workers = get<int>(j, "workers", "config");
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  auto path_or_null = [](const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); };
  json service = nullptr;
  if (c.data.embedding_service) {
    const auto& s = *c.data.embedding_service;
    service = {{"host", s.options.host},
               {"port", s.options.port},
               {"path", s.options.path},
               {"batch_size", s.options.batch_size},
               {"timeout_seconds", s.options.timeout_seconds},
               {"cache", s.cache.generic_string()}};
  }
  json arch = c.architecture_name == "paper" ? json("paper") : json::object();
  if (!arch.is_string()) {
    arch = {{"head_hidden", c.arch.head_hidden},   {"recurrent_units", c.arch.recurrent_units},
            {"conv_channels", c.arch.conv_channels}, {"model_width", c.arch.model_width},
            {"heads", c.arch.heads},               {"ffn_width", c.arch.ffn_width},
            {"projection_width", c.arch.projection_width}, {"source_embedding", c.arch.source_embedding}};
  }
  json hp = nullptr;
  if (c.profile == "custom") {
    hp = {{"learning_rate", c.hp.learning_rate},
          {"weight_decay", c.hp.weight_decay},
          {"dropout", c.hp.dropout},
          {"epochs", c.hp.epochs},
          {"batch_size", c.hp.batch_size}};
  }
  // the family is written as the base family when a "+variant" view chose it
  const bool variant_view = !c.view_name.empty() && c.view_name[0] == '+';
  return {{"name", c.name},
          {"data",
           {{"shape", corpus::to_string(c.data.shape)},
            {"corpus", path_or_null(c.data.corpus)},
            {"store", path_or_null(c.data.store)},
            {"labels", path_or_null(c.data.labels)},
            {"synthetic", c.data.synthetic ? synthetic_json(*c.data.synthetic) : json(nullptr)},
            {"embedding_service", service},
            {"allow_empty_description", c.data.allow_empty_description}}},
          {"task", corpus::to_string(c.task)},
          {"label",
           {{"rule", labeling::to_string(c.label.rule)},
            {"parameter", c.label.parameter ? json(*c.label.parameter) : json(nullptr)}}},
          {"view", c.view_name},
          {"model", {{"family", variant_view ? "mlp" : models::to_string(c.family)}, {"architecture", arch}}},
          {"profile", c.profile},
          {"hyperparameters", hp},
          {"threshold", c.hp.threshold},
          {"length", c.length ? json(*c.length) : json(nullptr)},
          {"selection",
           {{"criterion", c.selection.criterion == evaluation::Criterion::f1 ? "f1" : "f_beta"},
            {"beta", c.selection.beta}}},
          {"folds", c.folds},
          {"protocol", c.nested ? "nested" : "heldout"},
          {"seed", c.seed},
          {"output", c.output.generic_string()},
          {"workers", c.workers}};
}

}  // namespace viralbench::harness
