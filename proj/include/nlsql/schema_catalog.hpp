#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlsql/database.hpp"

namespace nlsql::schema {

struct ColumnSpec {
  int ordinal = 0;  // cid
  std::string name;
  std::string declared_type;  // verbatim from the engine
  bool not_null = false;
  std::optional<std::string> default_value;
  bool is_primary_key = false;

  bool operator==(const ColumnSpec&) const = default;
};

struct TableSchema {
  std::string name;
  std::vector<ColumnSpec> columns;  // ordinal ascending

  const ColumnSpec* find_column(std::string_view column) const;  // case-insensitive
  bool operator==(const TableSchema&) const = default;
};

// Metadata-only image of a database. Immutable once built; safe to share across threads.
class SchemaCatalog {
 public:
  SchemaCatalog() = default;
  // Validates the invariants and sorts tables by name. Throws IntrospectionError on violation.
  SchemaCatalog(std::string database_id, std::vector<TableSchema> tables);

  const std::string& database_id() const noexcept { return database_id_; }
  std::span<const TableSchema> tables() const noexcept { return tables_; }
  const TableSchema* find_table(std::string_view table) const;  // case-insensitive

  bool operator==(const SchemaCatalog&) const = default;

 private:
  std::string database_id_;
  std::vector<TableSchema> tables_;
};

// Reads base-table metadata of one schema. Views and system tables are skipped; no rows are read.
SchemaCatalog introspect(db::Connection& connection, std::string database_id, const std::string& schema = "main");

// "Table: <name>\nSchema:\n<aligned rows>" per table, tables separated by a blank line.
std::string render_schema_block(const SchemaCatalog& catalog);

bool lookup_identifier(const SchemaCatalog& catalog, std::string_view table,
                       std::optional<std::string_view> column = std::nullopt);

// Structured form for schema browsers.
nlohmann::json to_json(const SchemaCatalog& catalog);

}  // namespace nlsql::schema
