#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nlsql/database.hpp"
#include "nlsql/query_result.hpp"

struct sqlite3;

namespace nlsql::testkit {

// In-memory SQLite database; the reference engine for the source dialect.
class SqliteDb {
 public:
  SqliteDb();
  ~SqliteDb();
  SqliteDb(const SqliteDb&) = delete;
  SqliteDb& operator=(const SqliteDb&) = delete;

  void execute(std::string_view sql);     // throws std::runtime_error
  QueryResult query(std::string_view sql);  // throws std::runtime_error

 private:
  sqlite3* db_ = nullptr;
};

// Small admissions/cost schema filled with identical rows in both engines. Timestamps are TEXT
// in SQLite and TIMESTAMP in DuckDB; days stay below 29 so month arithmetic agrees.
void populate_toy_schema(SqliteDb& sqlite, db::Connection& duck);

struct DifferentialCase {
  std::string sql;              // source dialect
  std::vector<std::string> families;  // rule families the query needs
};

// Executable source-dialect queries over the toy schema, covering every datetime rule family.
std::vector<DifferentialCase> differential_corpus(std::size_t count, std::uint32_t seed);

// MIMIC-style desk database used by pipeline, eval and service tests.
void load_desk_database(db::Connection& connection);

// Every cell is a unique sentinel string; returns the sentinels.
std::vector<std::string> load_canary_database(db::Connection& connection);

}  // namespace nlsql::testkit
