#include "nlsql/schema_catalog.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "nlsql/error.hpp"
#include "nlsql/text.hpp"

namespace nlsql::schema {

const ColumnSpec* TableSchema::find_column(std::string_view column) const {
  auto it = std::find_if(columns.begin(), columns.end(),
                         [&](const ColumnSpec& c) { return text::iequals(c.name, column); });
  return it == columns.end() ? nullptr : &*it;
}

SchemaCatalog::SchemaCatalog(std::string database_id, std::vector<TableSchema> tables)
    : database_id_(std::move(database_id)), tables_(std::move(tables)) {
  std::set<std::string, text::ILess> table_names;
  for (auto& table : tables_) {
    if (table.name.empty()) throw IntrospectionError("table with empty name");
    if (!table_names.insert(table.name).second) throw IntrospectionError("duplicate table name: " + table.name);
    std::sort(table.columns.begin(), table.columns.end(),
              [](const ColumnSpec& a, const ColumnSpec& b) { return a.ordinal < b.ordinal; });
    std::set<int> ordinals;
    std::set<std::string, text::ILess> column_names;
    for (const auto& col : table.columns) {
      if (col.ordinal < 0 || !ordinals.insert(col.ordinal).second) {
        throw IntrospectionError("bad ordinal " + std::to_string(col.ordinal) + " in table " + table.name);
      }
      if (col.name.empty() || !column_names.insert(col.name).second) {
        throw IntrospectionError("empty or duplicate column '" + col.name + "' in table " + table.name);
      }
    }
  }
  std::sort(tables_.begin(), tables_.end(), [](const TableSchema& a, const TableSchema& b) { return a.name < b.name; });
}

const TableSchema* SchemaCatalog::find_table(std::string_view table) const {
  auto it = std::find_if(tables_.begin(), tables_.end(),
                         [&](const TableSchema& t) { return text::iequals(t.name, table); });
  return it == tables_.end() ? nullptr : &*it;
}

namespace {

std::string sql_string(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    out += c;
    if (c == '\'') out += '\'';
  }
  return out + "'";
}

std::string quoted_identifier(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    out += c;
    if (c == '"') out += '"';
  }
  return out + "\"";
}

bool as_bool(const Value& v) {
  if (auto b = std::get_if<bool>(&v)) return *b;
  if (auto i = std::get_if<std::int64_t>(&v)) return *i != 0;
  return false;
}

}  // namespace

SchemaCatalog introspect(db::Connection& connection, std::string database_id, const std::string& schema) {
  std::vector<TableSchema> tables;
  try {
    QueryResult names = connection.query(
        "SELECT table_name FROM duckdb_tables() WHERE database_name = current_database() AND schema_name = " +
        sql_string(schema) + " AND NOT internal AND NOT temporary ORDER BY table_name");
    for (const auto& row : names.rows) {
      TableSchema table;
      table.name = std::get<std::string>(row[0]);
      const std::string qualified = quoted_identifier(schema) + "." + quoted_identifier(table.name);
      QueryResult info = connection.query("SELECT cid, name, type, \"notnull\", dflt_value, pk FROM pragma_table_info(" +
                                          sql_string(qualified) + ") ORDER BY cid");
      for (const auto& c : info.rows) {
        ColumnSpec col;
        col.ordinal = static_cast<int>(std::get<std::int64_t>(c[0]));
        col.name = std::get<std::string>(c[1]);
        col.declared_type = std::get<std::string>(c[2]);
        col.not_null = as_bool(c[3]);
        if (!is_null(c[4])) col.default_value = to_display_string(c[4]);
        col.is_primary_key = as_bool(c[5]);
        table.columns.push_back(std::move(col));
      }
      tables.push_back(std::move(table));
    }
  } catch (const DatabaseError& e) {
    throw IntrospectionError(std::string("introspection failed: ") + e.what());
  }
  return SchemaCatalog(std::move(database_id), std::move(tables));
}

namespace {

std::string pad_left(const std::string& s, std::size_t width) {
  const std::size_t len = text::utf8_length(s);
  return len >= width ? s : std::string(width - len, ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  const std::size_t len = text::utf8_length(s);
  return len >= width ? s : s + std::string(width - len, ' ');
}

// Tabular layout of a dataframe print: a left-aligned row index, then right-aligned columns
// separated by one space. Every cell carries one leading space; numeric and boolean headers do too.
// The header line carries no leading whitespace.
std::string render_table(const TableSchema& table) {
  constexpr std::array<const char*, 6> headers = {"cid", "name", "type", "notnull", "dflt_value", "pk"};
  constexpr std::array<bool, 6> numeric = {true, false, false, true, false, true};
  auto flag = [](bool b) { return std::string(b ? "True" : "False"); };

  std::vector<std::array<std::string, 6>> cells;
  for (const auto& col : table.columns) {
    cells.push_back({std::to_string(col.ordinal), col.name, col.declared_type, flag(col.not_null),
                     col.default_value.value_or("None"), flag(col.is_primary_key)});
  }
  std::array<std::size_t, 6> widths{};
  for (std::size_t i = 0; i < headers.size(); ++i) {
    widths[i] = text::utf8_length(headers[i]) + (numeric[i] ? 1 : 0);
    for (const auto& row : cells) widths[i] = std::max(widths[i], 1 + text::utf8_length(row[i]));
  }
  std::size_t index_width = 1;
  if (!cells.empty()) index_width = std::to_string(cells.size() - 1).size();

  std::string header(index_width, ' ');
  for (std::size_t i = 0; i < headers.size(); ++i) header += " " + pad_left(headers[i], widths[i]);

  std::string out = "Table: " + table.name + "\nSchema:\n" + std::string(text::trim(header));
  for (std::size_t r = 0; r < cells.size(); ++r) {
    out += "\n" + pad_right(std::to_string(r), index_width);
    for (std::size_t i = 0; i < headers.size(); ++i) out += " " + pad_left(cells[r][i], widths[i]);
  }
  return out;
}

}  // namespace

std::string render_schema_block(const SchemaCatalog& catalog) {
  std::vector<std::string> blocks;
  for (const auto& table : catalog.tables()) blocks.push_back(render_table(table));
  return text::join(blocks, "\n\n");
}

bool lookup_identifier(const SchemaCatalog& catalog, std::string_view table, std::optional<std::string_view> column) {
  const TableSchema* t = catalog.find_table(table);
  if (!t) return false;
  return !column || t->find_column(*column) != nullptr;
}

nlohmann::json to_json(const SchemaCatalog& catalog) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : catalog.tables()) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : t.columns) {
      cols.push_back({{"cid", c.ordinal},
                      {"name", c.name},
                      {"type", c.declared_type},
                      {"notnull", c.not_null},
                      {"dflt_value", c.default_value ? nlohmann::json(*c.default_value) : nlohmann::json(nullptr)},
                      {"pk", c.is_primary_key}});
    }
    tables.push_back({{"name", t.name}, {"columns", std::move(cols)}});
  }
  return {{"database_id", catalog.database_id()}, {"tables", std::move(tables)}};
}

}  // namespace nlsql::schema
