#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>

#include "nlsql/sql_ast.hpp"

namespace nlsql::sql {

// Groups of rewrite rules from the SQLite dialect to DuckDB. Each family can be disabled
// independently, which is how tests check that every rule matters.
enum class RuleFamily {
  current_time,       // CURRENT_TIME / 'now' -> CURRENT_TIMESTAMP
  datetime_cast,      // datetime(x) -> CAST(x AS TIMESTAMP)
  datetime_start_of,  // 'start of month' -> DATE_TRUNC('month', x)
  datetime_offset,    // '-1 year' -> x - INTERVAL '1 year'
  datetime_noop,      // '-0 year' -> x
  strftime_args,      // strftime(fmt, t) -> STRFTIME(t, fmt)
};

std::string_view to_string(RuleFamily family);
std::span<const RuleFamily> all_rule_families();

struct TranspileOptions {
  std::set<RuleFamily> disabled;
};

struct TranspileResult {
  std::string sql;
  std::set<RuleFamily> fired;
};

// Rewrites a parsed source-dialect query in place, bottom-up, until no rule applies.
// Throws UnsupportedConstructError for constructs with no mapping.
void rewrite_to_target(Query& query, const TranspileOptions& options = {}, std::set<RuleFamily>* fired = nullptr);

// Parse, rewrite, render. Parse failures surface as TranspileError (never UnsupportedConstructError).
TranspileResult transpile_detailed(std::string_view source_sql, const TranspileOptions& options = {});
std::string transpile(std::string_view source_sql, const TranspileOptions& options = {});

}  // namespace nlsql::sql
