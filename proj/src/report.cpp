#include "viralbench/harness.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace viralbench::harness {

namespace {

constexpr std::array<const char*, 6> kColumnTitles = {"Acc", "BalAcc", "F1", "Prec", "Rec", "ROC-AUC"};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw parse_error("unterminated quote in report line");
  fields.push_back(std::move(cur));
  return fields;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string emit_report(const std::vector<TableRow>& rows, ReportFormat format) {
  if (rows.empty()) throw validation_error("a report needs at least one row");
  std::ostringstream os;
  if (format == ReportFormat::csv) {
    os << "dataset,model,folds";
    for (const char* name : evaluation::kMetricNames) os << ',' << name << ',' << name << "_std";
    os << '\n';
    for (const auto& r : rows) {
      os << csv_field(r.dataset) << ',' << csv_field(r.model) << ',' << r.aggregate.folds;
      const auto mean = evaluation::metric_values(r.aggregate.mean);
      const auto sd = evaluation::metric_values(r.aggregate.stddev);
      for (std::size_t i = 0; i < mean.size(); ++i) os << ',' << format_double(mean[i]) << ',' << format_double(sd[i]);
      os << '\n';
    }
    return os.str();
  }

  std::array<double, 6> best{};
  best.fill(-1.0);
  for (const auto& r : rows) {
    const auto v = evaluation::metric_values(r.aggregate.mean);
    for (std::size_t i = 0; i < v.size(); ++i) best[i] = std::max(best[i], v[i]);
  }
  const bool mark = rows.size() > 1;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"Dataset/Task", "Model"};
  for (const char* t : kColumnTitles) header.emplace_back(t);
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.dataset, r.model};
    const auto mean = evaluation::metric_values(r.aggregate.mean);
    const auto sd = evaluation::metric_values(r.aggregate.stddev);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      std::string cell = fixed(mean[i]) + " +/- " + fixed(sd[i]);
      if (mark && mean[i] == best[i]) cell += " *";
      line.push_back(std::move(cell));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  for (const auto& line : cells) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) text += "  ";
      text += line[c];
      if (c + 1 < line.size()) text.append(width[c] - line[c].size(), ' ');
    }
    os << text << '\n';
  }
  return os.str();
}

std::vector<TableRow> parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw parse_error("empty report");
  const auto header = split_csv_line(line);
  if (header.size() != 15 || header[0] != "dataset") throw parse_error("unexpected report header");
  std::vector<TableRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 15) throw parse_error("report line " + std::to_string(n) + " has " + std::to_string(f.size()) +
                                          " fields");
    TableRow r;
    r.dataset = f[0];
    r.model = f[1];
    try {
      r.aggregate.folds = std::stoul(f[2]);
      std::array<double, 6> mean{}, sd{};
      for (std::size_t i = 0; i < 6; ++i) {
        mean[i] = std::stod(f[3 + 2 * i]);
        sd[i] = std::stod(f[4 + 2 * i]);
      }
      auto fill = [](evaluation::MetricsReport& m, const std::array<double, 6>& v) {
        m.accuracy = v[0];
        m.balanced_accuracy = v[1];
        m.f1 = v[2];
        m.precision = v[3];
        m.recall = v[4];
        m.roc_auc = v[5];
      };
      fill(r.aggregate.mean, mean);
      fill(r.aggregate.stddev, sd);
    } catch (const std::logic_error&) {
      throw parse_error("report line " + std::to_string(n) + " has a malformed number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_report_files(const fs::path& dir, const std::string& stem, const std::vector<TableRow>& rows) {
  fs::create_directories(dir);
  for (const auto& [ext, format] : {std::pair{".txt", ReportFormat::text}, std::pair{".csv", ReportFormat::csv}}) {
    std::ofstream out(dir / (stem + ext), std::ios::binary);
    if (!out) throw run_error("cannot write report in " + dir.string());
    out << emit_report(rows, format);
  }
}

std::vector<TableRow> collect_rows(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw parse_error("no such directory " + dir.string());
  std::vector<fs::path> manifests;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "manifest.json") manifests.push_back(e.path());
  }
  std::sort(manifests.begin(), manifests.end());
  std::vector<TableRow> rows;
  for (const auto& p : manifests) {
    std::ifstream in(p);
    json m;
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw parse_error(p.string() + ": " + e.what());
    }
    if (m.value("status", "") != "complete") continue;
    const json& row = m.at("row");
    TableRow r;
    r.dataset = row.at("dataset").get<std::string>();
    r.model = row.at("model").get<std::string>();
    const json& agg = row.at("aggregate");
    r.aggregate.folds = agg.at("folds").get<std::size_t>();
    auto fill = [](evaluation::MetricsReport& mr, const json& j) {
      mr.accuracy = j.at("accuracy").get<double>();
      mr.balanced_accuracy = j.at("balanced_accuracy").get<double>();
      mr.f1 = j.at("f1").get<double>();
      mr.precision = j.at("precision").get<double>();
      mr.recall = j.at("recall").get<double>();
      mr.roc_auc = j.at("roc_auc").get<double>();
    };
    fill(r.aggregate.mean, agg.at("mean"));
    fill(r.aggregate.stddev, agg.at("std"));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace viralbench::harness
