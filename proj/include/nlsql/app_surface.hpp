#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlsql/database.hpp"
#include "nlsql/demo_store.hpp"
#include "nlsql/execution_sandbox.hpp"
#include "nlsql/llm_gateway.hpp"
#include "nlsql/schema_catalog.hpp"

namespace nlsql::app {

enum class BackendMode { live, replay, record };

std::string_view to_string(BackendMode mode);
BackendMode parse_backend_mode(std::string_view text);  // throws std::invalid_argument

struct AppConfig {
  // A path ending in ".sql" is run as a script into an in-memory database.
  std::map<std::string, std::filesystem::path> databases;
  std::map<std::string, llm::ModelConfig> models;
  std::string default_model = "o3-2025-04-16";
  exec::PipelineFlags flags{};
  exec::ExecutionLimits limits{};
  std::filesystem::path demo_path;
  BackendMode backend = BackendMode::replay;
  std::vector<std::filesystem::path> cassettes;
  std::filesystem::path audit_log = "nlsql_audit.jsonl";
  std::size_t display_rows = 200;
  std::size_t results_per_session = 20;

  // Relative paths resolve against base_dir. Keys that look like credentials are refused:
  // keys live only in the environment.
  static AppConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static AppConfig load(const std::filesystem::path& path);

  const llm::ModelConfig& model(std::string_view name) const;  // throws RequestError(404)
};

// Opens a registered database. Files open read-only; ".sql" scripts load into memory.
db::Database open_database(const std::filesystem::path& path);

// Live, replay or record-through-live backend for the configured mode.
std::shared_ptr<llm::Backend> make_backend(const AppConfig& config);

struct Turn {
  std::string question;
  std::optional<std::string> final_sql;
  std::optional<std::string> result_id;
  std::string status;  // ok | abstained | error
};

// Per-session state. Results are kept in an LRU of bounded size; ids are opaque.
class Session {
 public:
  Session(std::string id, std::string database_id, std::string model_name, std::size_t max_results);

  const std::string& id() const { return id_; }
  const std::string& database_id() const { return database_id_; }
  const std::string& model_name() const { return model_name_; }

  std::vector<Turn> turns() const;
  std::vector<exec::SessionTurn> context_turns() const;  // answered turns, oldest first
  void add_turn(Turn turn);

  std::string store_result(QueryResult result);
  std::optional<QueryResult> find_result(std::string_view result_id);
  std::size_t result_count() const;

  std::mutex& run_mutex() { return run_mutex_; }

 private:
  std::string id_;
  std::string database_id_;
  std::string model_name_;
  std::size_t max_results_;
  mutable std::mutex mutex_;
  std::mutex run_mutex_;  // serializes pipeline runs within the session
  std::vector<Turn> turns_;
  std::list<std::pair<std::string, QueryResult>> results_;  // most recently used first
  std::uint64_t counter_ = 0;
};

class SessionStore {
 public:
  explicit SessionStore(std::size_t max_results = 20) : max_results_(max_results) {}

  // Creates the session when id is empty or unknown. Throws RequestError(409) when an existing
  // session is bound to a different database.
  std::shared_ptr<Session> open(std::string_view id, const std::string& database_id, const std::string& model);
  std::shared_ptr<Session> find(std::string_view id) const;

 private:
  std::size_t max_results_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
  std::uint64_t counter_ = 0;
};

// Request handlers behind the HTTP routes. Every response carries "status": ok | abstained | error.
// Client mistakes throw RequestError with a 4xx status.
class Service {
 public:
  Service(AppConfig config, std::shared_ptr<llm::Backend> backend, std::shared_ptr<llm::AuditLog> audit,
          std::shared_ptr<const demos::DemoStore> demos = nullptr);

  nlohmann::json handle_query(const nlohmann::json& request);
  nlohmann::json handle_visualize(const nlohmann::json& request);
  nlohmann::json handle_schema(std::string_view database_id);
  nlohmann::json handle_history(std::string_view session_id);
  nlohmann::json handle_cohort_flow(const nlohmann::json& request);

  const AppConfig& config() const { return config_; }
  SessionStore& sessions() { return sessions_; }

 private:
  struct DatabaseHandle {
    db::Database database;
    schema::SchemaCatalog catalog;
  };
  DatabaseHandle& database(std::string_view id);
  llm::Gateway& gateway(const std::string& model);

  AppConfig config_;
  std::shared_ptr<llm::Backend> backend_;
  std::shared_ptr<llm::AuditLog> audit_;
  std::shared_ptr<const demos::DemoStore> demos_;
  SessionStore sessions_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<DatabaseHandle>, std::less<>> databases_;
  std::map<std::string, std::unique_ptr<llm::Gateway>, std::less<>> gateways_;
};

// Filter steps of a query's nested IN-subquery chain, innermost first, each with its row count.
nlohmann::json cohort_flow(std::string_view sql, db::Connection& connection, const exec::ExecutionLimits& limits = {});

// Blocks serving /api/* until stop() is called on the returned server or the process exits.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  bool listen(const std::string& host, int port);  // blocking
  int bind_any_port(const std::string& host);      // then listen_after_bind()
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nlsql::app
