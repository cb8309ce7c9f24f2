#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace nlsql {

// Date/time value carried in the engine's canonical text form ("2100-05-01 00:00:00").
struct Timestamp {
  std::string text;
  auto operator<=>(const Timestamp&) const = default;
};

using Value = std::variant<std::monostate, bool, std::int64_t, double, std::string, Timestamp>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }

std::string to_display_string(const Value& v);
nlohmann::json to_json(const Value& v);

struct ResultColumn {
  std::string name;
  std::string type;
  bool operator==(const ResultColumn&) const = default;
};

// Column-typed tabular result of a local query. Never placed in a prompt.
struct QueryResult {
  std::vector<ResultColumn> columns;
  std::vector<std::vector<Value>> rows;
  bool truncated = false;  // more rows existed than the row cap allowed

  std::size_t row_count() const { return rows.size(); }
  std::size_t column_count() const { return columns.size(); }
  std::vector<std::string> column_names() const;
  std::optional<std::size_t> column_index(std::string_view name) const;
};

// {"columns":[{name,type}], "rows":[[...]], "total_rows":n, "truncated":bool}; rows capped at max_rows.
nlohmann::json to_json(const QueryResult& result, std::size_t max_rows);

}  // namespace nlsql
