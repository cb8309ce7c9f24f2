#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <string_view>

#include <duckdb.h>

#include "nlsql/query_result.hpp"

namespace nlsql::db {

class Connection;

struct OpenOptions {
  bool read_only = true;
};

// Owns an embedded DuckDB instance. Connections keep the instance alive.
class Database {
 public:
  static Database open(const std::filesystem::path& path, OpenOptions options = {});
  static Database in_memory();

  Connection connect() const;
  const std::string& path() const;
  bool read_only() const;

 private:
  struct State;
  explicit Database(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
  friend class Connection;
};

// A single DuckDB connection. Not safe for concurrent use; open one per thread.
class Connection {
 public:
  Connection(Connection&&) noexcept;
  Connection& operator=(Connection&&) noexcept;
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection();

  // Runs one or more statements, discarding results. Throws DatabaseError.
  void execute(std::string_view sql);
  // Runs a query and materializes the whole result. Throws DatabaseError.
  QueryResult query(std::string_view sql);

  duckdb_connection handle() const noexcept { return conn_; }

 private:
  friend class Database;
  Connection(std::shared_ptr<Database::State> db, duckdb_connection conn) : db_(std::move(db)), conn_(conn) {}
  std::shared_ptr<Database::State> db_;
  duckdb_connection conn_ = nullptr;
};

// Drains a DuckDB result chunk by chunk, keeping at most max_rows rows.
QueryResult read_result(duckdb_result& result, std::size_t max_rows = std::numeric_limits<std::size_t>::max());

}  // namespace nlsql::db
