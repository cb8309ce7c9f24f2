#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nlsql::demos {

// Finite, non-empty real vector.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);  // throws EmbeddingError if empty or non-finite

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dimension() const noexcept { return values_.size(); }
  double norm() const;
  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  // Deterministic per (provider, text). Throws EmbeddingError when the provider is unavailable.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

// Offline provider: Feature hashing of word unigrams and bigrams, L2-normalized.
class HashedTokenEmbedder final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 384;
  explicit HashedTokenEmbedder(std::size_t dimension = kDefaultDimension);

  std::string name() const override { return "hashed-token-" + std::to_string(dimension_); }
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

// Client for an OpenAI-style /embeddings endpoint (e.g. a local sentence-embedding server).
struct HttpEmbeddingConfig {
  std::string endpoint;  // base URL, e.g. http://127.0.0.1:8080/v1
  std::string model = "all-MiniLM-L6-v2";
  std::size_t dimension = 384;
  std::string credential_env;  // optional bearer token variable
  int timeout_seconds = 30;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig config);
  std::string name() const override { return "http:" + config_.model; }
  std::size_t dimension() const override { return config_.dimension; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  HttpEmbeddingConfig config_;
};

// Rejects empty text and dimension drift from the provider's declared dimension.
EmbeddingVector embed_text(std::string_view text, const EmbeddingProvider& provider);

// dot(u,v)/(|u||v|). Throws std::invalid_argument on dimension mismatch or a zero vector.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

enum class DemoSource { literature, benchmark, session };

std::string_view to_string(DemoSource source);

struct Demonstration {
  std::string id;
  std::string question;
  std::vector<std::string> relevant_tables;
  std::string sql;
  DemoSource source = DemoSource::benchmark;
  EmbeddingVector embedding;
};

struct ScoredDemo {
  Demonstration demo;
  double similarity = 0.0;
};

// Parses one demo-file record. Throws IngestError naming the record on missing or malformed fields.
Demonstration parse_demo_record(const nlohmann::json& record);

// Exact cosine top-k store. Reads run concurrently against an immutable snapshot;
// ingestion builds a new snapshot and swaps it in.
class DemoStore {
 public:
  explicit DemoStore(std::shared_ptr<const EmbeddingProvider> provider);

  // Loads a JSON-lines demo file. All-or-nothing: any bad record aborts the whole file.
  std::size_t ingest_demos(const std::filesystem::path& path);
  std::size_t ingest_records(std::span<const nlohmann::json> records, std::string_view origin = "records");
  // Adds a demo; an empty embedding is computed from the question.
  void add(Demonstration demo);

  std::vector<ScoredDemo> retrieve_top_k(std::string_view question, std::size_t k) const;
  std::vector<ScoredDemo> retrieve_top_k(const EmbeddingVector& query, std::size_t k) const;

  std::size_t size() const;
  std::size_t dimension() const { return provider_->dimension(); }
  const EmbeddingProvider& provider() const { return *provider_; }

 private:
  using Snapshot = std::vector<Demonstration>;
  std::shared_ptr<const Snapshot> snapshot() const;
  void validate(const Demonstration& demo) const;
  void commit(std::vector<Demonstration> batch);

  std::shared_ptr<const EmbeddingProvider> provider_;
  mutable std::shared_mutex mutex_;
  std::shared_ptr<const Snapshot> demos_;
};

// Few-shot block: one "## " section per demo, in the given order, separated by blank lines.
std::string render_demo_block(std::span<const Demonstration> demos);

}  // namespace nlsql::demos
