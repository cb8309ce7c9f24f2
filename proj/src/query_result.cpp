#include "nlsql/query_result.hpp"

#include <cmath>
#include <sstream>

namespace nlsql {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string format_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(15);
  os << d;
  return os.str();
}

}  // namespace

std::string to_display_string(const Value& v) {
  return std::visit(overloaded{
                        [](std::monostate) -> std::string { return "NULL"; },
                        [](bool b) -> std::string { return b ? "true" : "false"; },
                        [](std::int64_t i) -> std::string { return std::to_string(i); },
                        [](double d) -> std::string { return format_double(d); },
                        [](const std::string& s) -> std::string { return s; },
                        [](const Timestamp& t) -> std::string { return t.text; },
                    },
                    v);
}

nlohmann::json to_json(const Value& v) {
  return std::visit(overloaded{
                        [](std::monostate) -> nlohmann::json { return nullptr; },
                        [](bool b) -> nlohmann::json { return b; },
                        [](std::int64_t i) -> nlohmann::json { return i; },
                        [](double d) -> nlohmann::json {
                          if (!std::isfinite(d)) return format_double(d);
                          return d;
                        },
                        [](const std::string& s) -> nlohmann::json { return s; },
                        [](const Timestamp& t) -> nlohmann::json { return t.text; },
                    },
                    v);
}

std::vector<std::string> QueryResult::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns.size());
  for (const auto& c : columns) names.push_back(c.name);
  return names;
}

std::optional<std::size_t> QueryResult::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

nlohmann::json to_json(const QueryResult& result, std::size_t max_rows) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : result.columns) cols.push_back({{"name", c.name}, {"type", c.type}});
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < result.rows.size() && r < max_rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& v : result.rows[r]) row.push_back(to_json(v));
    rows.push_back(std::move(row));
  }
  return {{"columns", std::move(cols)},
          {"rows", std::move(rows)},
          {"total_rows", result.rows.size()},
          {"truncated", result.truncated || result.rows.size() > max_rows}};
}

}  // namespace nlsql
