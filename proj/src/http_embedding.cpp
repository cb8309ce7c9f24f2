#include <cstdlib>
#include <stdexcept>

#include "http_json.hpp"
#include "nlsql/demo_store.hpp"
#include "nlsql/error.hpp"

namespace nlsql::demos {

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw EmbeddingError("embedding endpoint is empty");
  if (config_.dimension == 0) throw EmbeddingError("embedding dimension must be positive");
}

EmbeddingVector HttpEmbeddingProvider::embed(std::string_view text) const {
  std::string token;
  if (!config_.credential_env.empty()) {
    if (const char* v = std::getenv(config_.credential_env.c_str())) token = v;
  }
  nlohmann::json body = {{"model", config_.model}, {"input", std::string(text)}};
  nlohmann::json res;
  try {
    res = detail::http_post_json(config_.endpoint, "/embeddings", body, token,
                                 std::chrono::seconds(config_.timeout_seconds));
  } catch (const std::runtime_error& e) {
    throw EmbeddingError(std::string("embedding provider unavailable: ") + e.what());
  }
  try {
    const auto& arr = res.at("data").at(0).at("embedding");
    std::vector<double> values;
    values.reserve(arr.size());
    for (const auto& x : arr) values.push_back(x.get<double>());
    return EmbeddingVector(std::move(values));
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingError(std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace nlsql::demos
