#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlsql/prompt_builder.hpp"

namespace nlsql::llm {

struct ModelConfig {
  std::string model_name;
  std::string endpoint = "https://api.openai.com/v1";
  std::string credential_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{120000};
  nlohmann::json decoding = nlohmann::json::object();  // merged into the request body

  // Throws GatewayError when model_name is empty or the timeout is not positive.
  void validate() const;
  // Most deterministic setting the provider accepts: temperature 0, except reasoning models
  // (o1/o3/o4 families) which reject a temperature parameter.
  static nlohmann::json default_decoding(std::string_view model_name);
  static ModelConfig for_model(std::string model_name);
};

struct CompletionRecord {
  std::string prompt_hash;
  std::string prompt;
  std::string completion;
  std::string model_name;
  double latency_seconds = 0.0;
  std::string timestamp;  // UTC, ISO-8601
  nlohmann::json decoding = nlohmann::json::object();
};

nlohmann::json to_json(const CompletionRecord& record);
CompletionRecord completion_from_json(const nlohmann::json& j);

std::string sha256_hex(std::string_view data);
std::string utc_now_iso8601();

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual CompletionRecord complete(const std::string& prompt, const ModelConfig& config) = 0;
};

// Chat-completions over HTTPS. One network call per completion.
class LiveBackend final : public Backend {
 public:
  std::string name() const override { return "live"; }
  CompletionRecord complete(const std::string& prompt, const ModelConfig& config) override;
};

// Versioned JSON-lines file of completion records keyed by (model_name, prompt_hash).
class Cassette {
 public:
  static constexpr int kVersion = 1;

  Cassette() = default;
  static Cassette load(const std::filesystem::path& path);  // throws GatewayError on malformed files
  static Cassette load_all(std::span<const std::filesystem::path> paths);

  void add(CompletionRecord record);
  // Records for a key in recording order; nullptr when absent.
  const std::vector<CompletionRecord>* find(const std::string& model_name, const std::string& prompt_hash) const;
  std::size_t size() const { return count_; }
  void save(const std::filesystem::path& path) const;

  static nlohmann::json record_line(const CompletionRecord& record);

 private:
  std::map<std::pair<std::string, std::string>, std::vector<CompletionRecord>> records_;
  std::size_t count_ = 0;
};

// Serves recorded completions byte-exactly. No network. A key recorded n times is served in
// recording order; further requests get the last recording.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}
  std::string name() const override { return "replay"; }
  CompletionRecord complete(const std::string& prompt, const ModelConfig& config) override;

 private:
  Cassette cassette_;
  std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::size_t> cursor_;
};

// Test double: returns queued completions in order.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> responses);
  void push(std::string response);
  std::size_t remaining() const;
  std::string name() const override { return "scripted"; }
  CompletionRecord complete(const std::string& prompt, const ModelConfig& config) override;  // ScriptExhaustedError

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
};

// Forwards to another backend and appends every successful completion to a cassette file.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path cassette_path);
  std::string name() const override { return "record:" + inner_->name(); }
  CompletionRecord complete(const std::string& prompt, const ModelConfig& config) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path path_;
  std::mutex mutex_;
};

struct AuditEntry {
  std::string timestamp;
  std::string model_name;
  std::string backend;
  std::string prompt_kind;
  std::string prompt_hash;
  std::string prompt;
};

// Append-only JSON-lines log of every outbound prompt, written by a single serialized writer.
// Any write failure throws AuditError.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path);
  void append(const AuditEntry& entry);
  std::size_t entries_written() const;
  const std::filesystem::path& path() const { return path_; }

  static std::vector<AuditEntry> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::size_t written_ = 0;
};

struct CanaryHit {
  std::size_t line = 0;
  std::string token;
};

// Every occurrence of any token in the raw bytes of a log file.
std::vector<CanaryHit> scan_for_tokens(const std::filesystem::path& path, std::span<const std::string> tokens);

// The single choke-point for model traffic: audit first, then call the backend.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, ModelConfig config, std::shared_ptr<AuditLog> audit);

  CompletionRecord complete(const prompt::PromptBundle& prompt);

  const ModelConfig& config() const { return config_; }
  const Backend& backend() const { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  ModelConfig config_;
  std::shared_ptr<AuditLog> audit_;
};

}  // namespace nlsql::llm
