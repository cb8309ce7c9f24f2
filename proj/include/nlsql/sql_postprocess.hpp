#pragma once

#include <compare>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nlsql/schema_catalog.hpp"

namespace nlsql::postprocess {

// Content of the last ```sql fenced block, trimmed. Throws ExtractionError when there is none.
std::string extract_sql(std::string_view completion);

struct ColumnReference {
  std::string table;  // resolved base table, empty when unresolved
  std::string column;
  auto operator<=>(const ColumnReference&) const = default;
};

struct IdentifierSet {
  std::set<std::string> tables;  // base tables only; CTE names excluded
  std::set<ColumnReference> columns;
};

// Base tables and column references of a target-dialect query, with alias and CTE scoping.
// Throws ParseError.
IdentifierSet collect_identifiers(std::string_view sql);

struct Violation {
  std::string identifier;
  std::string reason;  // unknown table | unknown column | unknown table or alias | star select | parse error
  bool operator==(const Violation&) const = default;
};

struct GuardrailReport {
  bool passed = true;
  std::set<std::string> referenced_tables;
  std::set<ColumnReference> referenced_columns;
  std::vector<Violation> violations;

  // Message fed back to the model on a failed attempt; empty when passed.
  std::string error_message() const;
};

struct GuardrailOptions {
  bool flag_star_select = true;  // off for benchmark gold queries
};

// Never throws for bad SQL: parse failures become a "parse error" violation.
GuardrailReport guardrail_check(std::string_view sql, const schema::SchemaCatalog& catalog,
                                GuardrailOptions options = {});

}  // namespace nlsql::postprocess
