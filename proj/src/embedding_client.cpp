#include "viralbench/common.hpp"
#include "viralbench/embedding_store.hpp"

#include <httplib.h>
#include <json.hpp>

namespace viralbench {

HttpEmbeddingClient::HttpEmbeddingClient(Options options) : options_(std::move(options)) {
  if (options_.batch_size == 0) throw config_error("embedding client batch_size must be positive");
}

std::vector<std::vector<double>> HttpEmbeddingClient::embed(const std::vector<std::string>& texts) {
  httplib::Client cli(options_.host, options_.port);
  cli.set_connection_timeout(options_.timeout_seconds, 0);
  cli.set_read_timeout(options_.timeout_seconds, 0);
  cli.set_write_timeout(options_.timeout_seconds, 0);

  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
    const std::size_t stop = std::min(texts.size(), start + options_.batch_size);
    nlohmann::json req;
    req["texts"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                            texts.begin() + static_cast<std::ptrdiff_t>(stop));
    auto res = cli.Post(options_.path, req.dump(), "application/json");
    if (!res) throw run_error("embedding service unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw run_error("embedding service returned HTTP " + std::to_string(res->status));
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(std::string("embedding service response: ") + e.what());
    }
    if (!body.contains("vectors") || !body["vectors"].is_array() || body["vectors"].size() != stop - start) {
      throw parse_error("embedding service response lacks a 'vectors' array of the request size");
    }
    for (const auto& v : body["vectors"]) out.push_back(v.get<std::vector<double>>());
  }
  return out;
}

}  // namespace viralbench
