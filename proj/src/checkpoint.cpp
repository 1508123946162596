#include "viralbench/models.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace viralbench::models {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "viralbench.checkpoint";
constexpr int kVersion = 1;

void require_exact_keys(const json& obj, const std::set<std::string>& keys, const std::string& where) {
  if (!obj.is_object()) throw parse_error(where + " must be an object");
  for (const auto& [k, _] : obj.items()) {
    if (!keys.count(k)) throw parse_error("unknown field '" + k + "' in " + where);
  }
  for (const auto& k : keys) {
    if (!obj.contains(k)) throw parse_error("missing field '" + k + "' in " + where);
  }
}

json architecture_json(const Architecture& a) {
  return {{"head_hidden", a.head_hidden},       {"recurrent_units", a.recurrent_units},
          {"conv_channels", a.conv_channels},   {"model_width", a.model_width},
          {"heads", a.heads},                   {"ffn_width", a.ffn_width},
          {"projection_width", a.projection_width}, {"source_embedding", a.source_embedding}};
}

Architecture architecture_from(const json& j) {
  require_exact_keys(j,
                     {"head_hidden", "recurrent_units", "conv_channels", "model_width", "heads", "ffn_width",
                      "projection_width", "source_embedding"},
                     "architecture");
  Architecture a;
  a.head_hidden = j.at("head_hidden").get<Eigen::Index>();
  a.recurrent_units = j.at("recurrent_units").get<Eigen::Index>();
  a.conv_channels = j.at("conv_channels").get<Eigen::Index>();
  a.model_width = j.at("model_width").get<Eigen::Index>();
  a.heads = j.at("heads").get<Eigen::Index>();
  a.ffn_width = j.at("ffn_width").get<Eigen::Index>();
  a.projection_width = j.at("projection_width").get<Eigen::Index>();
  a.source_embedding = j.at("source_embedding").get<Eigen::Index>();
  return a;
}

}  // namespace

json model_config_json(const ModelConfig& c) {
  return {{"family", to_string(c.family)},         {"view", to_string(c.view)},
          {"text_dim", c.text_dim},                {"max_length", c.max_length},
          {"source_count", c.source_count},        {"dropout", c.dropout},
          {"seed", c.seed},                        {"architecture", architecture_json(c.arch)}};
}

ModelConfig model_config_from(const json& j) {
  require_exact_keys(j, {"family", "view", "text_dim", "max_length", "source_count", "dropout", "seed", "architecture"},
                     "model config");
  ModelConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  c.view = parse_view(j.at("view").get<std::string>());
  c.text_dim = j.at("text_dim").get<Eigen::Index>();
  c.max_length = j.at("max_length").get<Eigen::Index>();
  c.source_count = j.at("source_count").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.arch = architecture_from(j.at("architecture"));
  return c;
}

Checkpoint snapshot(const Model& model, int epoch, const std::string& metric, double score) {
  Checkpoint c;
  c.config = model.config();
  c.params = model.params();
  c.epoch = epoch;
  c.selection_metric = metric;
  c.selection_score = score;
  return c;
}

std::unique_ptr<Model> restore(const Checkpoint& checkpoint) {
  auto model = make_model(checkpoint.config);
  model->params().assign(checkpoint.params);
  return model;
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  json params = json::array();
  for (std::size_t i = 0; i < checkpoint.params.size(); ++i) {
    const Matrix& m = checkpoint.params.value(i);
    json values = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    params.push_back(
        {{"name", checkpoint.params.name(i)}, {"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}});
  }
  const json doc = {{"format", kFormat},
                    {"version", kVersion},
                    {"config", model_config_json(checkpoint.config)},
                    {"epoch", checkpoint.epoch},
                    {"selection_metric", checkpoint.selection_metric},
                    {"selection_score", checkpoint.selection_score},
                    {"parameters", std::move(params)}};
  out << doc.dump() << '\n';
}

Checkpoint read_checkpoint(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw parse_error(std::string("checkpoint: ") + e.what());
  }
  try {
    require_exact_keys(doc,
                       {"format", "version", "config", "epoch", "selection_metric", "selection_score", "parameters"},
                       "checkpoint");
    if (doc.at("format") != kFormat) throw parse_error("not a checkpoint file");
    if (doc.at("version").get<int>() != kVersion) {
      throw parse_error("unsupported checkpoint version " + doc.at("version").dump());
    }
    Checkpoint c;
    c.config = model_config_from(doc.at("config"));
    c.epoch = doc.at("epoch").get<int>();
    c.selection_metric = doc.at("selection_metric").get<std::string>();
    c.selection_score = doc.at("selection_score").get<double>();
    for (const auto& p : doc.at("parameters")) {
      require_exact_keys(p, {"name", "rows", "cols", "values"}, "parameter");
      const auto rows = p.at("rows").get<Eigen::Index>();
      const auto cols = p.at("cols").get<Eigen::Index>();
      const auto& values = p.at("values");
      if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols) {
        throw parse_error("parameter '" + p.at("name").get<std::string>() + "' has inconsistent shape");
      }
      Matrix m(rows, cols);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index col = 0; col < cols; ++col) m(r, col) = values[k++].get<double>();
      c.params.add(p.at("name").get<std::string>(), std::move(m));
    }
    return c;
  } catch (const json::exception& e) {
    throw parse_error(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw run_error("cannot write checkpoint " + path.string());
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace viralbench::models
