#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace viralbench {

/// Fixed-dimension id -> vector map. Built once (insert), then shared read-only.
///
/// File format: a header line "dim=<d> count=<n>" followed by one record per
/// line, "id<TAB>v1,v2,...,vd". Values are written in shortest round-trip form,
/// so save/load is bit-exact.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 0);

  void insert(const std::string& id, std::span<const double> vec);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Throws a lookup error naming the id when absent.
  std::span<const double> lookup(const std::string& id) const;

  std::vector<std::string> missing(std::span<const std::string> ids) const;

  static EmbeddingStore read(std::istream& in);
  static EmbeddingStore load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Source of text embeddings, e.g. a remote model server.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

/// Client for a JSON embedding endpoint: POST {"texts": [...]} returning
/// {"vectors": [[...], ...]}.
class HttpEmbeddingClient : public EmbeddingProvider {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/embed";
    std::size_t batch_size = 32;
    int timeout_seconds = 30;
  };

  explicit HttpEmbeddingClient(Options options);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  Options options_;
};

/// Embeds every (id, text) pair not already present in the cache file and
/// rewrites the cache, so later runs work offline from the file alone.
EmbeddingStore embed_and_cache(EmbeddingProvider& provider,
                               const std::vector<std::pair<std::string, std::string>>& id_texts,
                               const std::filesystem::path& cache_path);

}  // namespace viralbench
