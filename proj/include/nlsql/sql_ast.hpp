#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace nlsql::sql {

// source: SQLite-style input dialect; target: DuckDB.
enum class Dialect { source, target };

// Byte offsets into the text the node was parsed from. Rewritten nodes inherit the span of
// the node they replace.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

enum class QuoteStyle { none, double_quote, backtick, bracket };

struct Identifier {
  std::string name;
  QuoteStyle quote = QuoteStyle::none;
};

struct Expr;
struct Query;
using ExprPtr = std::unique_ptr<Expr>;
using QueryPtr = std::unique_ptr<Query>;

struct Literal {
  enum class Kind { number, string, null, boolean };
  Kind kind = Kind::number;
  std::string text;  // number as written, string unescaped, "TRUE"/"FALSE"/"NULL"
};

struct ColumnRef {
  std::vector<Identifier> parts;  // [schema.][table.]column
};

struct Star {
  std::vector<Identifier> qualifier;  // empty for bare *
};

struct OrderItem {
  ExprPtr expr;
  bool descending = false;
  bool explicit_direction = false;
  std::optional<bool> nulls_first;
};

struct WindowSpec {
  std::vector<ExprPtr> partition_by;
  std::vector<OrderItem> order_by;
};

struct FunctionCall {
  std::string name;  // as written
  std::vector<ExprPtr> args;
  bool distinct = false;
  bool star_arg = false;  // COUNT(*)
  std::optional<WindowSpec> over;
};

struct UnaryOp {
  std::string op;  // NOT, -, +, ~
  ExprPtr operand;
};

struct BinaryOp {
  std::string op;  // OR AND = <> < <= > >= + - * / % || IS, IS NOT
  ExprPtr left;
  ExprPtr right;
};

struct CaseWhen {
  ExprPtr operand;  // simple CASE when set
  std::vector<std::pair<ExprPtr, ExprPtr>> whens;
  ExprPtr else_expr;
};

struct TypeName {
  std::string name;  // upper-case, multi-word names joined by one space
  std::vector<std::string> params;
};

struct Cast {
  ExprPtr expr;
  TypeName type;
  bool try_cast = false;
};

struct TypedLiteral {
  TypeName type;
  std::string value;
};

struct InList {
  ExprPtr expr;
  std::vector<ExprPtr> items;
  bool negated = false;
};

struct InSubquery {
  ExprPtr expr;
  QueryPtr query;
  bool negated = false;
};

struct Exists {
  QueryPtr query;
};

struct ScalarSubquery {
  QueryPtr query;
};

struct Between {
  ExprPtr expr;
  ExprPtr low;
  ExprPtr high;
  bool negated = false;
};

struct Like {
  std::string op;  // LIKE, ILIKE, GLOB
  ExprPtr expr;
  ExprPtr pattern;
  ExprPtr escape;
  bool negated = false;
};

struct IsNull {
  ExprPtr expr;
  bool negated = false;
};

struct Interval {
  ExprPtr value;
  std::string unit;  // empty when the value literal carries the unit ('1 day')
};

struct Extract {
  std::string field;
  ExprPtr expr;
};

// CURRENT_TIME, CURRENT_DATE, CURRENT_TIMESTAMP written without parentheses.
struct SpecialValue {
  std::string keyword;
};

struct Expr {
  Span span;
  std::variant<Literal, ColumnRef, Star, FunctionCall, UnaryOp, BinaryOp, CaseWhen, Cast, TypedLiteral, InList,
               InSubquery, Exists, ScalarSubquery, Between, Like, IsNull, Interval, Extract, SpecialValue>
      node;
};

template <typename T>
ExprPtr make_expr(T node, Span span = {}) {
  auto e = std::make_unique<Expr>();
  e->span = span;
  e->node = std::move(node);
  return e;
}

struct SelectItem {
  ExprPtr expr;
  std::optional<Identifier> alias;
};

struct TableRef;

enum class JoinKind { inner, left, right, full, cross };

struct Join {
  JoinKind kind = JoinKind::inner;
  bool natural = false;
  bool explicit_inner = false;
  std::unique_ptr<TableRef> table;
  ExprPtr on;
  std::vector<Identifier> using_columns;
};

struct NamedTable {
  std::vector<Identifier> path;  // [catalog.][schema.]table
};

struct DerivedTable {
  QueryPtr query;
};

struct TableRef {
  Span span;
  std::variant<NamedTable, DerivedTable> source;
  std::optional<Identifier> alias;
  std::vector<Identifier> column_aliases;
  std::vector<Join> joins;
};

struct SelectCore {
  Span span;
  bool distinct = false;
  std::vector<SelectItem> items;
  std::vector<TableRef> from;
  ExprPtr where;
  std::vector<ExprPtr> group_by;
  ExprPtr having;
};

struct QueryBody;

enum class SetOpKind { union_, intersect, except };

struct SetOperation {
  SetOpKind op = SetOpKind::union_;
  bool all = false;
  std::unique_ptr<QueryBody> left;
  std::unique_ptr<QueryBody> right;
};

struct QueryBody {
  std::variant<SelectCore, SetOperation, QueryPtr> node;  // QueryPtr: parenthesized query
};

struct Cte {
  Identifier name;
  std::vector<Identifier> columns;
  QueryPtr query;
};

struct Query {
  Span span;
  bool recursive = false;
  std::vector<Cte> ctes;
  QueryBody body;
  std::vector<OrderItem> order_by;
  ExprPtr limit;
  ExprPtr offset;
};

// Parses exactly one SELECT statement (optional trailing semicolon). Throws ParseError.
QueryPtr parse_sql(std::string_view sql, Dialect dialect = Dialect::target);

// Canonical rendering: upper-case keywords and function names, single spaces, minimal parentheses.
std::string render_sql(const Query& query, Dialect dialect = Dialect::target);
std::string render_expr(const Expr& expr, Dialect dialect = Dialect::target);

// Span-free structural dump; two ASTs are structurally equal iff their dumps are equal.
std::string debug_tree(const Query& query);

// Post-order traversal over every expression slot, including those inside nested queries.
// The callback may replace the slot's content.
void for_each_expr(Query& query, const std::function<void(ExprPtr&)>& fn);

}  // namespace nlsql::sql
