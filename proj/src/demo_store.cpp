#include "nlsql/demo_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <unordered_set>

#include "nlsql/error.hpp"
#include "nlsql/text.hpp"

namespace nlsql::demos {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw EmbeddingError("embedding has dimension 0");
  for (double v : values_) {
    if (!std::isfinite(v)) throw EmbeddingError("embedding has a non-finite entry");
  }
}

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || (static_cast<unsigned char>(c) & 0x80)) {
      current += text::lower_ascii(c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace

HashedTokenEmbedder::HashedTokenEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw EmbeddingError("embedding dimension must be positive");
}

EmbeddingVector HashedTokenEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  const auto tokens = word_tokens(text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    v[fnv1a("u:" + tokens[i]) % dimension_] += 1.0;
    if (i + 1 < tokens.size()) v[fnv1a("b:" + tokens[i] + " " + tokens[i + 1]) % dimension_] += 0.5;
  }
  if (tokens.empty()) v[fnv1a(text) % dimension_] = 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return EmbeddingVector(std::move(v));
}

EmbeddingVector embed_text(std::string_view text, const EmbeddingProvider& provider) {
  if (text::trim(text).empty()) throw EmbeddingError("cannot embed empty text");
  EmbeddingVector v = provider.embed(text);
  if (v.dimension() != provider.dimension()) {
    throw EmbeddingError("provider " + provider.name() + " returned dimension " + std::to_string(v.dimension()) +
                         ", expected " + std::to_string(provider.dimension()));
  }
  return v;
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(u.dimension()) + " vs " +
                                std::to_string(v.dimension()) + ")");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  auto a = u.values();
  auto b = v.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    nu += a[i] * a[i];
    nv += b[i] * b[i];
  }
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::string_view to_string(DemoSource source) {
  switch (source) {
    case DemoSource::literature: return "literature";
    case DemoSource::benchmark: return "benchmark";
    case DemoSource::session: return "session";
  }
  return "benchmark";
}

Demonstration parse_demo_record(const nlohmann::json& record) {
  std::string id = "<unknown>";
  if (record.is_object() && record.contains("id") && record["id"].is_string()) id = record["id"].get<std::string>();
  if (!record.is_object()) throw IngestError(id, "demo record is not an object");
  if (id == "<unknown>" || id.empty()) throw IngestError(id, "demo record is missing 'id'");

  auto require_text = [&](const char* key) {
    if (!record.contains(key) || !record[key].is_string() || text::trim(record[key].get<std::string>()).empty()) {
      throw IngestError(id, "demo '" + id + "' is missing '" + key + "'");
    }
    return record[key].get<std::string>();
  };

  Demonstration demo;
  demo.id = id;
  demo.question = require_text("question");
  demo.sql = require_text("sql");
  if (!record.contains("relevant_tables") || !record["relevant_tables"].is_array() ||
      record["relevant_tables"].empty()) {
    throw IngestError(id, "demo '" + id + "' is missing 'relevant_tables'");
  }
  for (const auto& t : record["relevant_tables"]) {
    if (!t.is_string() || t.get<std::string>().empty()) {
      throw IngestError(id, "demo '" + id + "' has a malformed relevant_tables entry");
    }
    demo.relevant_tables.push_back(t.get<std::string>());
  }
  const std::string source = require_text("source");
  if (source == "literature") {
    demo.source = DemoSource::literature;
  } else if (source == "benchmark") {
    demo.source = DemoSource::benchmark;
  } else {
    throw IngestError(id, "demo '" + id + "' has unknown source '" + source + "'");
  }
  return demo;
}

DemoStore::DemoStore(std::shared_ptr<const EmbeddingProvider> provider)
    : provider_(std::move(provider)), demos_(std::make_shared<const Snapshot>()) {
  if (!provider_) throw EmbeddingError("demo store needs an embedding provider");
}

std::shared_ptr<const DemoStore::Snapshot> DemoStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return demos_;
}

std::size_t DemoStore::size() const { return snapshot()->size(); }

void DemoStore::validate(const Demonstration& demo) const {
  if (demo.id.empty()) throw IngestError(demo.id, "demo has empty id");
  if (text::trim(demo.question).empty() || text::trim(demo.sql).empty()) {
    throw IngestError(demo.id, "demo '" + demo.id + "' has empty question or sql");
  }
  if (demo.relevant_tables.empty()) throw IngestError(demo.id, "demo '" + demo.id + "' has no relevant tables");
  if (demo.embedding.dimension() != provider_->dimension()) {
    throw IngestError(demo.id, "demo '" + demo.id + "' embedding dimension " +
                                   std::to_string(demo.embedding.dimension()) + " != store dimension " +
                                   std::to_string(provider_->dimension()));
  }
}

void DemoStore::commit(std::vector<Demonstration> batch) {
  std::unique_lock lock(mutex_);
  std::unordered_set<std::string> ids;
  for (const auto& d : *demos_) ids.insert(d.id);
  for (const auto& d : batch) {
    if (!ids.insert(d.id).second) throw IngestError(d.id, "duplicate demo id '" + d.id + "'");
  }
  auto next = std::make_shared<Snapshot>(*demos_);
  for (auto& d : batch) next->push_back(std::move(d));
  demos_ = std::move(next);
}

void DemoStore::add(Demonstration demo) {
  if (demo.embedding.dimension() == 0) demo.embedding = embed_text(demo.question, *provider_);
  validate(demo);
  std::vector<Demonstration> batch;
  batch.push_back(std::move(demo));
  commit(std::move(batch));
}

std::size_t DemoStore::ingest_records(std::span<const nlohmann::json> records, std::string_view origin) {
  std::vector<Demonstration> batch;
  batch.reserve(records.size());
  for (const auto& record : records) {
    Demonstration demo = parse_demo_record(record);
    try {
      demo.embedding = embed_text(demo.question, *provider_);
    } catch (const EmbeddingError& e) {
      throw IngestError(demo.id, "demo '" + demo.id + "' from " + std::string(origin) + ": " + e.what());
    }
    validate(demo);
    batch.push_back(std::move(demo));
  }
  const std::size_t n = batch.size();
  commit(std::move(batch));
  return n;
}

std::size_t DemoStore::ingest_demos(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("", "cannot open demo file " + path.string());
  std::vector<nlohmann::json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError("line " + std::to_string(line_no),
                        path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
  }
  return ingest_records(records, path.string());
}

std::vector<ScoredDemo> DemoStore::retrieve_top_k(std::string_view question, std::size_t k) const {
  if (k == 0 || size() == 0) return {};
  return retrieve_top_k(embed_text(question, *provider_), k);
}

std::vector<ScoredDemo> DemoStore::retrieve_top_k(const EmbeddingVector& query, std::size_t k) const {
  auto demos = snapshot();
  if (k == 0 || demos->empty()) return {};
  std::vector<std::pair<double, const Demonstration*>> scored;
  scored.reserve(demos->size());
  for (const auto& d : *demos) scored.emplace_back(cosine_similarity(query, d.embedding), &d);
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second->id < b.second->id;
                    });
  std::vector<ScoredDemo> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({*scored[i].second, scored[i].first});
  return out;
}

std::string render_demo_block(std::span<const Demonstration> demos) {
  std::vector<std::string> sections;
  sections.reserve(demos.size());
  for (const auto& d : demos) {
    std::string s = "## \nQuestion: " + d.question + "\nAnswer: Let's think step-by-step.\n1. Identify the relevant tables:\n";
    for (const auto& t : d.relevant_tables) s += "-- " + t + "\n";
    s += "2. Final SQL query:\n" + d.sql;
    sections.push_back(std::move(s));
  }
  return text::join(sections, "\n\n");
}

}  // namespace nlsql::demos
