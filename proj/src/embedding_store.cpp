#include "viralbench/embedding_store.hpp"

#include "viralbench/common.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace viralbench {

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {}

void EmbeddingStore::insert(const std::string& id, std::span<const double> vec) {
  if (dim_ == 0) throw validation_error("embedding store has dim 0");
  if (vec.size() != dim_) {
    throw validation_error("embedding '" + id + "' has " + std::to_string(vec.size()) + " values, store dim is " +
                           std::to_string(dim_));
  }
  if (index_.count(id)) throw integrity_error("duplicate embedding id '" + id + "'");
  index_[id] = ids_.size();
  ids_.push_back(id);
  data_.insert(data_.end(), vec.begin(), vec.end());
}

std::span<const double> EmbeddingStore::lookup(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw lookup_error("no embedding for id '" + id + "'");
  return {data_.data() + it->second * dim_, dim_};
}

std::vector<std::string> EmbeddingStore::missing(std::span<const std::string> ids) const {
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (!contains(id)) out.push_back(id);
  }
  return out;
}

namespace {

bool parse_header_field(const std::string& token, const std::string& key, std::size_t& out) {
  if (token.rfind(key + "=", 0) != 0) return false;
  const char* b = token.data() + key.size() + 1;
  const char* e = token.data() + token.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

}  // namespace

EmbeddingStore EmbeddingStore::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw parse_error("embedding store: missing header (line 1)");
  std::istringstream hs(line);
  std::string a, b;
  std::size_t dim = 0, count = 0;
  if (!(hs >> a >> b) || !parse_header_field(a, "dim", dim) || !parse_header_field(b, "count", count) || dim == 0) {
    throw parse_error("embedding store: header must be 'dim=<d> count=<n>' (line 1)");
  }
  EmbeddingStore store(dim);
  std::vector<double> vec;
  vec.reserve(dim);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw parse_error("embedding store: expected 'id<TAB>values' (line " + std::to_string(lineno) + ")");
    }
    vec.clear();
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      double v;
      auto [q, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        throw parse_error("embedding store: bad number (line " + std::to_string(lineno) + ")");
      }
      vec.push_back(v);
      p = q;
      if (p < end) {
        if (*p != ',') throw parse_error("embedding store: expected ',' (line " + std::to_string(lineno) + ")");
        ++p;
      }
    }
    if (vec.size() != dim) {
      throw validation_error("embedding store: line " + std::to_string(lineno) + " has " +
                             std::to_string(vec.size()) + " values, header says dim=" + std::to_string(dim));
    }
    try {
      store.insert(line.substr(0, tab), vec);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  if (store.size() != count) {
    throw validation_error("embedding store: header says count=" + std::to_string(count) + " but found " +
                           std::to_string(store.size()) + " records");
  }
  return store;
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open embedding store " + path.string());
  return read(in);
}

void EmbeddingStore::write(std::ostream& out) const {
  out << "dim=" << dim_ << " count=" << ids_.size() << '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out << ids_[i] << '\t';
    for (std::size_t j = 0; j < dim_; ++j) {
      if (j) out << ',';
      out << format_double(data_[i * dim_ + j]);
    }
    out << '\n';
  }
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw run_error("cannot write embedding store " + path.string());
  write(out);
}

EmbeddingStore embed_and_cache(EmbeddingProvider& provider,
                               const std::vector<std::pair<std::string, std::string>>& id_texts,
                               const std::filesystem::path& cache_path) {
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::size_t dim = 0;
  if (std::filesystem::exists(cache_path)) {
    EmbeddingStore cached = EmbeddingStore::load(cache_path);
    dim = cached.dim();
    for (const auto& id : cached.ids()) {
      auto v = cached.lookup(id);
      rows.emplace_back(id, std::vector<double>(v.begin(), v.end()));
    }
  }
  std::unordered_map<std::string, bool> have;
  for (const auto& r : rows) have[r.first] = true;

  std::vector<std::string> ids, texts;
  for (const auto& [id, text] : id_texts) {
    if (have.count(id)) continue;
    have[id] = true;
    ids.push_back(id);
    texts.push_back(text);
  }
  if (!texts.empty()) {
    auto vectors = provider.embed(texts);
    if (vectors.size() != texts.size()) {
      throw run_error("embedding provider returned " + std::to_string(vectors.size()) + " vectors for " +
                      std::to_string(texts.size()) + " texts");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (dim == 0) dim = vectors[i].size();
      rows.emplace_back(ids[i], std::move(vectors[i]));
    }
  }
  EmbeddingStore store(dim);
  for (const auto& [id, v] : rows) store.insert(id, v);
  if (!texts.empty()) store.save(cache_path);
  return store;
}

}  // namespace viralbench
