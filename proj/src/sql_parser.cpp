#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "nlsql/error.hpp"
#include "nlsql/sql_ast.hpp"
#include "nlsql/text.hpp"

namespace nlsql::sql {

namespace {

enum class Tok { word, quoted_ident, string, number, symbol, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;  // identifier/string content unescaped; symbol text; number as written
  QuoteStyle quote = QuoteStyle::none;
  std::size_t begin = 0;
  std::size_t end = 0;
};

constexpr std::array kReserved = {
    "ALL",    "AND",       "AS",     "ASC",       "BETWEEN", "BY",      "CASE",   "CAST",      "CROSS",
    "DESC",   "DISTINCT",  "ELSE",   "END",       "ESCAPE",  "EXCEPT",  "EXISTS", "FALSE",     "FILTER",
    "FROM",   "FULL",      "GLOB",   "GROUP",     "HAVING",  "ILIKE",   "IN",     "INNER",     "INTERSECT",
    "INTERVAL", "IS",      "ISNULL", "JOIN",      "LEFT",    "LIKE",    "LIMIT",  "NATURAL",   "NOT",
    "NOTNULL", "NULL",     "NULLS",  "OFFSET",    "ON",      "OR",      "ORDER",  "OUTER",     "OVER",
    "PARTITION", "QUALIFY", "RECURSIVE", "RIGHT", "SELECT",  "THEN",    "TRUE",   "TRY_CAST",  "UNION",
    "USING",  "WHEN",      "WHERE",  "WINDOW",    "WITH",
};

// Reserved words that may still name a function when followed by '('.
constexpr std::array kReservedCallable = {"LEFT", "RIGHT"};

constexpr std::array kIntervalUnits = {
    "YEAR",   "YEARS",   "MONTH", "MONTHS", "WEEK",    "WEEKS",    "DAY",    "DAYS",
    "HOUR",   "HOURS",   "MINUTE", "MINUTES", "SECOND", "SECONDS", "MILLISECOND", "MILLISECONDS",
    "MICROSECOND", "MICROSECONDS", "QUARTER", "QUARTERS", "DECADE", "CENTURY",
};

template <std::size_t N>
bool in_list(const std::array<const char*, N>& list, std::string_view word) {
  for (const char* k : list) {
    if (text::iequals(word, k)) return true;
  }
  return false;
}

bool is_reserved(std::string_view word) { return in_list(kReserved, word); }

std::pair<std::size_t, std::size_t> line_col(std::string_view src, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < src.size(); ++i) {
    if (src[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] void fail(std::string_view src, std::size_t offset, const std::string& message) {
  auto [line, col] = line_col(src, offset);
  throw ParseError(message, offset, line, col);
}

bool word_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || (c & 0x80); }
bool word_char(char c) { return word_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '$'; }

std::vector<Token> lex(std::string_view src, Dialect dialect) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = src.size();
  while (true) {
    while (i < n) {
      if (text::is_space(src[i])) {
        ++i;
      } else if (src.substr(i, 2) == "--") {
        while (i < n && src[i] != '\n') ++i;
      } else if (src.substr(i, 2) == "/*") {
        const auto close = src.find("*/", i + 2);
        if (close == std::string_view::npos) fail(src, i, "unterminated block comment");
        i = close + 2;
      } else {
        break;
      }
    }
    Token t;
    t.begin = i;
    if (i >= n) {
      t.kind = Tok::end;
      t.end = n;
      out.push_back(t);
      return out;
    }
    const char c = src[i];
    if (word_start(c)) {
      std::size_t j = i;
      while (j < n && word_char(src[j])) ++j;
      t.kind = Tok::word;
      t.text = std::string(src.substr(i, j - i));
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      if (c == '0' && j + 1 < n && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
        j += 2;
        while (j < n && std::isxdigit(static_cast<unsigned char>(src[j]))) ++j;
      } else {
        while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        if (j < n && src[j] == '.') {
          ++j;
          while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
        if (j < n && (src[j] == 'e' || src[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < n && (src[k] == '+' || src[k] == '-')) ++k;
          if (k < n && std::isdigit(static_cast<unsigned char>(src[k]))) {
            j = k;
            while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
          }
        }
      }
      if (j < n && word_start(src[j])) fail(src, j, "malformed number");
      t.kind = Tok::number;
      t.text = std::string(src.substr(i, j - i));
      i = j;
    } else if (c == '\'' || c == '"' || c == '`' || (c == '[' && dialect == Dialect::source)) {
      const char close = c == '[' ? ']' : c;
      std::string body;
      std::size_t j = i + 1;
      while (true) {
        if (j >= n) fail(src, i, c == '\'' ? "unterminated string literal" : "unterminated quoted identifier");
        if (src[j] == close) {
          if (close != ']' && j + 1 < n && src[j + 1] == close) {
            body += close;
            j += 2;
            continue;
          }
          ++j;
          break;
        }
        body += src[j++];
      }
      if (c == '\'') {
        t.kind = Tok::string;
      } else {
        t.kind = Tok::quoted_ident;
        t.quote = c == '"' ? QuoteStyle::double_quote : c == '`' ? QuoteStyle::backtick : QuoteStyle::bracket;
        if (body.empty()) fail(src, i, "empty quoted identifier");
      }
      t.text = std::move(body);
      i = j;
    } else {
      static constexpr std::array kTwo = {"||", "==", "!=", "<>", "<=", ">=", "::", "<<", ">>"};
      t.kind = Tok::symbol;
      const std::string_view two = src.substr(i, 2);
      bool matched = false;
      for (const char* s : kTwo) {
        if (two == s) {
          t.text = std::string(two);
          i += 2;
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (std::string_view("(),.;*+-/%=<>~&|").find(c) == std::string_view::npos) {
          if (c == '?' || c == ':' || c == '@' || c == '$') fail(src, i, "parameter placeholders are not supported");
          fail(src, i, std::string("unexpected character '") + c + "'");
        }
        t.text = std::string(1, c);
        ++i;
      }
    }
    t.end = i;
    out.push_back(std::move(t));
  }
}

class Parser {
 public:
  Parser(std::string_view src, Dialect dialect) : src_(src), dialect_(dialect), toks_(lex(src, dialect)) {}

  QueryPtr parse_statement() {
    while (is_symbol(";")) ++pos_;
    if (peek().kind == Tok::end) fail_here("empty statement");
    if (!is_kw("SELECT") && !is_kw("WITH") && !is_symbol("(")) {
      if (peek().kind == Tok::word) fail_here("only SELECT statements are supported, found " + text::to_upper(peek().text));
      fail_here("expected SELECT");
    }
    QueryPtr q = parse_query();
    bool saw_semicolon = false;
    while (is_symbol(";")) {
      ++pos_;
      saw_semicolon = true;
    }
    if (peek().kind != Tok::end) {
      if (saw_semicolon) fail_here("multiple statements are not supported");
      fail_here("unexpected " + describe(peek()));
    }
    return q;
  }

 private:
  // ---- token helpers ----
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t k = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[k];
  }
  const Token& advance() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  std::size_t last_end() const { return pos_ == 0 ? 0 : toks_[pos_ - 1].end; }

  bool is_kw(std::string_view kw, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::word && text::iequals(t.text, kw);
  }
  bool is_symbol(std::string_view s, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::symbol && t.text == s;
  }
  bool accept_kw(std::string_view kw) {
    if (!is_kw(kw)) return false;
    ++pos_;
    return true;
  }
  bool accept_symbol(std::string_view s) {
    if (!is_symbol(s)) return false;
    ++pos_;
    return true;
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) fail_here("expected " + std::string(kw) + ", found " + describe(peek()));
  }
  void expect_symbol(std::string_view s) {
    if (!accept_symbol(s)) fail_here("expected '" + std::string(s) + "', found " + describe(peek()));
  }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::end: return "end of input";
      case Tok::string: return "string literal";
      case Tok::number: return "number " + t.text;
      case Tok::quoted_ident: return "identifier \"" + t.text + "\"";
      case Tok::word: return "'" + t.text + "'";
      case Tok::symbol: return "'" + t.text + "'";
    }
    return "token";
  }

  [[noreturn]] void fail_here(const std::string& message) const { fail(src_, peek().begin, message); }

  bool at_identifier() const {
    const Token& t = peek();
    return t.kind == Tok::quoted_ident || (t.kind == Tok::word && !is_reserved(t.text));
  }

  Identifier parse_identifier(std::string_view what) {
    const Token& t = peek();
    if (!at_identifier()) fail_here("expected " + std::string(what) + ", found " + describe(t));
    ++pos_;
    return Identifier{t.text, t.quote};
  }

  std::optional<Identifier> parse_alias() {
    if (accept_kw("AS")) {
      if (peek().kind == Tok::string) {
        const Token& t = advance();
        return Identifier{t.text, QuoteStyle::double_quote};
      }
      return parse_identifier("alias");
    }
    if (at_identifier()) return parse_identifier("alias");
    return std::nullopt;
  }

  // ---- queries ----
  QueryPtr parse_query() {
    auto q = std::make_unique<Query>();
    q->span.begin = peek().begin;
    if (accept_kw("WITH")) {
      q->recursive = accept_kw("RECURSIVE");
      do {
        Cte cte;
        cte.name = parse_identifier("common table expression name");
        if (accept_symbol("(")) {
          do cte.columns.push_back(parse_identifier("column name"));
          while (accept_symbol(","));
          expect_symbol(")");
        }
        expect_kw("AS");
        if (accept_kw("NOT")) {
          expect_kw("MATERIALIZED");
        } else {
          accept_kw("MATERIALIZED");
        }
        expect_symbol("(");
        cte.query = parse_query();
        expect_symbol(")");
        q->ctes.push_back(std::move(cte));
      } while (accept_symbol(","));
    }
    q->body = parse_set_expr();
    if (accept_kw("ORDER")) {
      expect_kw("BY");
      q->order_by = parse_order_list();
    }
    if (accept_kw("LIMIT")) {
      ExprPtr first = parse_expr();
      if (accept_symbol(",")) {
        q->offset = std::move(first);
        q->limit = parse_expr();
      } else {
        q->limit = std::move(first);
      }
    }
    if (!q->offset && accept_kw("OFFSET")) q->offset = parse_expr();
    q->span.end = last_end();
    return q;
  }

  QueryBody parse_set_expr() {
    QueryBody left = parse_set_term();
    while (true) {
      SetOpKind op;
      if (is_kw("UNION")) {
        op = SetOpKind::union_;
      } else if (is_kw("INTERSECT")) {
        op = SetOpKind::intersect;
      } else if (is_kw("EXCEPT")) {
        op = SetOpKind::except;
      } else {
        break;
      }
      ++pos_;
      SetOperation s;
      s.op = op;
      s.all = accept_kw("ALL");
      if (!s.all) accept_kw("DISTINCT");
      s.left = std::make_unique<QueryBody>(std::move(left));
      s.right = std::make_unique<QueryBody>(parse_set_term());
      left = QueryBody{std::move(s)};
    }
    return left;
  }

  QueryBody parse_set_term() {
    if (accept_symbol("(")) {
      QueryPtr inner = parse_query();
      expect_symbol(")");
      return QueryBody{std::move(inner)};
    }
    return QueryBody{parse_select_core()};
  }

  SelectCore parse_select_core() {
    SelectCore core;
    core.span.begin = peek().begin;
    expect_kw("SELECT");
    if (accept_kw("DISTINCT")) {
      if (is_kw("ON")) fail_here("DISTINCT ON is not supported");
      core.distinct = true;
    } else {
      accept_kw("ALL");
    }
    do core.items.push_back(parse_select_item());
    while (accept_symbol(","));
    if (accept_kw("FROM")) {
      do core.from.push_back(parse_table_ref());
      while (accept_symbol(","));
    }
    if (accept_kw("WHERE")) core.where = parse_expr();
    if (accept_kw("GROUP")) {
      expect_kw("BY");
      do core.group_by.push_back(parse_expr());
      while (accept_symbol(","));
    }
    if (accept_kw("HAVING")) core.having = parse_expr();
    if (is_kw("WINDOW") || is_kw("QUALIFY")) fail_here(text::to_upper(peek().text) + " clauses are not supported");
    core.span.end = last_end();
    return core;
  }

  SelectItem parse_select_item() {
    SelectItem item;
    const std::size_t begin = peek().begin;
    if (is_symbol("*")) {
      ++pos_;
      item.expr = make_expr(Star{}, {begin, last_end()});
      return item;
    }
    // qualifier.* (one or two qualifier parts)
    for (std::size_t parts = 1; parts <= 2; ++parts) {
      bool shape = true;
      for (std::size_t k = 0; k < parts; ++k) {
        const Token& t = peek(2 * k);
        const bool ident = t.kind == Tok::quoted_ident || (t.kind == Tok::word && !is_reserved(t.text));
        if (!ident || !is_symbol(".", 2 * k + 1)) shape = false;
      }
      if (shape && is_symbol("*", 2 * parts)) {
        Star star;
        for (std::size_t k = 0; k < parts; ++k) {
          star.qualifier.push_back(parse_identifier("table name"));
          expect_symbol(".");
        }
        expect_symbol("*");
        item.expr = make_expr(std::move(star), {begin, last_end()});
        return item;
      }
    }
    item.expr = parse_expr();
    item.alias = parse_alias();
    return item;
  }

  TableRef parse_table_primary() {
    TableRef ref;
    ref.span.begin = peek().begin;
    if (accept_symbol("(")) {
      if (!is_kw("SELECT") && !is_kw("WITH") && !is_symbol("(")) fail_here("parenthesized joins are not supported");
      ref.source = DerivedTable{parse_query()};
      expect_symbol(")");
    } else {
      NamedTable t;
      t.path.push_back(parse_identifier("table name"));
      while (accept_symbol(".")) t.path.push_back(parse_identifier("table name"));
      if (is_symbol("(")) fail_here("table functions are not supported");
      ref.source = std::move(t);
    }
    ref.alias = parse_alias();
    if (ref.alias && is_symbol("(")) {
      ++pos_;
      do ref.column_aliases.push_back(parse_identifier("column alias"));
      while (accept_symbol(","));
      expect_symbol(")");
    }
    ref.span.end = last_end();
    return ref;
  }

  TableRef parse_table_ref() {
    TableRef ref = parse_table_primary();
    while (true) {
      Join j;
      const std::size_t save = pos_;
      j.natural = accept_kw("NATURAL");
      if (accept_kw("INNER")) {
        j.kind = JoinKind::inner;
        j.explicit_inner = true;
      } else if (accept_kw("LEFT")) {
        j.kind = JoinKind::left;
        accept_kw("OUTER");
      } else if (accept_kw("RIGHT")) {
        j.kind = JoinKind::right;
        accept_kw("OUTER");
      } else if (accept_kw("FULL")) {
        j.kind = JoinKind::full;
        accept_kw("OUTER");
      } else if (accept_kw("CROSS")) {
        j.kind = JoinKind::cross;
      }
      if (!accept_kw("JOIN")) {
        if (pos_ != save) fail_here("expected JOIN, found " + describe(peek()));
        break;
      }
      j.table = std::make_unique<TableRef>(parse_table_primary());
      if (j.kind != JoinKind::cross && !j.natural) {
        if (accept_kw("ON")) {
          j.on = parse_expr();
        } else if (accept_kw("USING")) {
          expect_symbol("(");
          do j.using_columns.push_back(parse_identifier("column name"));
          while (accept_symbol(","));
          expect_symbol(")");
        }
      }
      ref.joins.push_back(std::move(j));
    }
    ref.span.end = last_end();
    return ref;
  }

  std::vector<OrderItem> parse_order_list() {
    std::vector<OrderItem> items;
    do {
      OrderItem it;
      it.expr = parse_expr();
      if (accept_kw("ASC")) {
        it.explicit_direction = true;
      } else if (accept_kw("DESC")) {
        it.explicit_direction = true;
        it.descending = true;
      }
      if (accept_kw("NULLS")) {
        if (accept_kw("FIRST")) {
          it.nulls_first = true;
        } else {
          expect_kw("LAST");
          it.nulls_first = false;
        }
      }
      items.push_back(std::move(it));
    } while (accept_symbol(","));
    return items;
  }

  // ---- expressions ----
  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr binary(std::string op, ExprPtr l, ExprPtr r) {
    Span s{l->span.begin, r->span.end};
    return make_expr(BinaryOp{std::move(op), std::move(l), std::move(r)}, s);
  }

  ExprPtr parse_or() {
    ExprPtr left = parse_and();
    while (accept_kw("OR")) left = binary("OR", std::move(left), parse_and());
    return left;
  }

  ExprPtr parse_and() {
    ExprPtr left = parse_not();
    while (accept_kw("AND")) left = binary("AND", std::move(left), parse_not());
    return left;
  }

  ExprPtr parse_not() {
    if (is_kw("NOT") && !is_kw("EXISTS", 1)) {
      const std::size_t begin = advance().begin;
      ExprPtr operand = parse_not();
      const Span s{begin, operand->span.end};
      return make_expr(UnaryOp{"NOT", std::move(operand)}, s);
    }
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    ExprPtr left = parse_concat_level();
    while (true) {
      const Token& t = peek();
      const std::size_t begin = left->span.begin;
      if (t.kind == Tok::symbol &&
          (t.text == "=" || t.text == "==" || t.text == "!=" || t.text == "<>" || t.text == "<" ||
           t.text == "<=" || t.text == ">" || t.text == ">=")) {
        if (t.text == "==" && dialect_ == Dialect::target) fail_here("'==' is not valid in this dialect");
        std::string op = t.text == "==" ? "=" : t.text == "!=" ? "<>" : t.text;
        ++pos_;
        left = binary(std::move(op), std::move(left), parse_concat_level());
        continue;
      }
      if (is_kw("ISNULL") || is_kw("NOTNULL")) {
        const bool neg = is_kw("NOTNULL");
        ++pos_;
        left = make_expr(IsNull{std::move(left), neg}, {begin, last_end()});
        continue;
      }
      if (is_kw("IS")) {
        ++pos_;
        const bool neg = accept_kw("NOT");
        if (accept_kw("NULL")) {
          left = make_expr(IsNull{std::move(left), neg}, {begin, last_end()});
        } else {
          if (is_kw("DISTINCT")) fail_here("IS DISTINCT FROM is not supported");
          left = binary(neg ? "IS NOT" : "IS", std::move(left), parse_concat_level());
        }
        continue;
      }
      bool negated = false;
      if (is_kw("NOT") && (is_kw("IN", 1) || is_kw("LIKE", 1) || is_kw("ILIKE", 1) || is_kw("GLOB", 1) ||
                           is_kw("BETWEEN", 1))) {
        ++pos_;
        negated = true;
      }
      if (accept_kw("IN")) {
        expect_symbol("(");
        if (is_kw("SELECT") || is_kw("WITH")) {
          QueryPtr q = parse_query();
          expect_symbol(")");
          left = make_expr(InSubquery{std::move(left), std::move(q), negated}, {begin, last_end()});
        } else {
          InList in;
          in.expr = std::move(left);
          in.negated = negated;
          if (!is_symbol(")")) {
            do in.items.push_back(parse_expr());
            while (accept_symbol(","));
          }
          expect_symbol(")");
          left = make_expr(std::move(in), {begin, last_end()});
        }
        continue;
      }
      if (is_kw("LIKE") || is_kw("ILIKE") || is_kw("GLOB")) {
        Like like;
        like.op = text::to_upper(advance().text);
        like.negated = negated;
        like.expr = std::move(left);
        like.pattern = parse_concat_level();
        if (accept_kw("ESCAPE")) like.escape = parse_concat_level();
        left = make_expr(std::move(like), {begin, last_end()});
        continue;
      }
      if (accept_kw("BETWEEN")) {
        Between b;
        b.negated = negated;
        b.expr = std::move(left);
        b.low = parse_concat_level();
        expect_kw("AND");
        b.high = parse_concat_level();
        left = make_expr(std::move(b), {begin, last_end()});
        continue;
      }
      if (negated) fail_here("expected IN, LIKE or BETWEEN after NOT");
      return left;
    }
  }

  ExprPtr parse_concat_level() {
    ExprPtr left = parse_additive();
    while (accept_symbol("||")) left = binary("||", std::move(left), parse_additive());
    return left;
  }

  ExprPtr parse_additive() {
    ExprPtr left = parse_multiplicative();
    while (is_symbol("+") || is_symbol("-")) {
      std::string op = advance().text;
      left = binary(std::move(op), std::move(left), parse_multiplicative());
    }
    return left;
  }

  ExprPtr parse_multiplicative() {
    ExprPtr left = parse_unary();
    while (is_symbol("*") || is_symbol("/") || is_symbol("%")) {
      std::string op = advance().text;
      left = binary(std::move(op), std::move(left), parse_unary());
    }
    return left;
  }

  ExprPtr parse_unary() {
    if (is_symbol("-") || is_symbol("+") || is_symbol("~")) {
      const Token& t = advance();
      std::string op = t.text;
      const std::size_t begin = t.begin;
      ExprPtr operand = parse_unary();
      const Span s{begin, operand->span.end};
      return make_expr(UnaryOp{std::move(op), std::move(operand)}, s);
    }
    return parse_postfix();
  }

  ExprPtr parse_postfix() {
    ExprPtr e = parse_primary();
    while (is_symbol("::")) {
      if (dialect_ == Dialect::source) fail_here("'::' casts are not valid in this dialect");
      ++pos_;
      const std::size_t begin = e->span.begin;
      TypeName type = parse_type_name();
      e = make_expr(Cast{std::move(e), std::move(type), false}, {begin, last_end()});
    }
    if (is_kw("COLLATE")) fail_here("COLLATE is not supported");
    return e;
  }

  TypeName parse_type_name() {
    TypeName type;
    if (peek().kind != Tok::word) fail_here("expected type name, found " + describe(peek()));
    type.name = text::to_upper(advance().text);
    // multi-word names: DOUBLE PRECISION, TIMESTAMP WITH TIME ZONE, CHARACTER VARYING
    static constexpr std::array kFollow = {"PRECISION", "VARYING"};
    while (peek().kind == Tok::word && in_list(kFollow, peek().text)) type.name += " " + text::to_upper(advance().text);
    if (is_kw("WITH") && is_kw("TIME", 1) && is_kw("ZONE", 2)) {
      pos_ += 3;
      type.name += " WITH TIME ZONE";
    }
    if (accept_symbol("(")) {
      do {
        const Token& t = peek();
        if (t.kind != Tok::number && t.kind != Tok::word) fail_here("expected type parameter, found " + describe(t));
        type.params.push_back(advance().text);
      } while (accept_symbol(","));
      expect_symbol(")");
    }
    return type;
  }

  ExprPtr parse_primary() {
    const Token& t = peek();
    const std::size_t begin = t.begin;
    switch (t.kind) {
      case Tok::end: fail_here("unexpected end of input, expected an expression");
      case Tok::number: {
        ++pos_;
        return make_expr(Literal{Literal::Kind::number, t.text}, {begin, t.end});
      }
      case Tok::string: {
        ++pos_;
        return make_expr(Literal{Literal::Kind::string, t.text}, {begin, t.end});
      }
      case Tok::quoted_ident: return parse_column_ref();
      case Tok::symbol: {
        if (t.text == "(") {
          ++pos_;
          if (is_kw("SELECT") || is_kw("WITH")) {
            QueryPtr q = parse_query();
            expect_symbol(")");
            return make_expr(ScalarSubquery{std::move(q)}, {begin, last_end()});
          }
          ExprPtr inner = parse_expr();
          if (is_symbol(",")) fail_here("row values are not supported");
          expect_symbol(")");
          inner->span = {begin, last_end()};
          return inner;
        }
        fail_here("unexpected " + describe(t) + ", expected an expression");
      }
      case Tok::word: break;
    }

    const std::string upper = text::to_upper(t.text);
    if (upper == "NULL" || upper == "TRUE" || upper == "FALSE") {
      ++pos_;
      return make_expr(Literal{upper == "NULL" ? Literal::Kind::null : Literal::Kind::boolean, upper}, {begin, t.end});
    }
    if (upper == "CASE") return parse_case();
    if (upper == "CAST" || upper == "TRY_CAST") {
      ++pos_;
      expect_symbol("(");
      ExprPtr e = parse_expr();
      expect_kw("AS");
      TypeName type = parse_type_name();
      expect_symbol(")");
      return make_expr(Cast{std::move(e), std::move(type), upper == "TRY_CAST"}, {begin, last_end()});
    }
    if (upper == "EXISTS" || (upper == "NOT" && is_kw("EXISTS", 1))) {
      const bool neg = upper == "NOT";
      pos_ += neg ? 2 : 1;
      expect_symbol("(");
      QueryPtr q = parse_query();
      expect_symbol(")");
      ExprPtr ex = make_expr(Exists{std::move(q)}, {begin, last_end()});
      if (neg) return make_expr(UnaryOp{"NOT", std::move(ex)}, {begin, last_end()});
      return ex;
    }
    if (upper == "INTERVAL") {
      ++pos_;
      Interval iv;
      if (peek().kind == Tok::string || peek().kind == Tok::number) {
        const Token& v = advance();
        iv.value = make_expr(Literal{v.kind == Tok::string ? Literal::Kind::string : Literal::Kind::number, v.text},
                             {v.begin, v.end});
      } else if (is_symbol("(")) {
        iv.value = parse_primary();
      } else {
        fail_here("expected interval value, found " + describe(peek()));
      }
      if (peek().kind == Tok::word && in_list(kIntervalUnits, peek().text)) iv.unit = text::to_upper(advance().text);
      const auto* lit = std::get_if<Literal>(&iv.value->node);
      if (iv.unit.empty() && (!lit || lit->kind != Literal::Kind::string)) {
        fail_here("interval needs a unit");
      }
      return make_expr(std::move(iv), {begin, last_end()});
    }
    if (upper == "EXTRACT" && is_symbol("(", 1)) {
      pos_ += 2;
      if (peek().kind != Tok::word && peek().kind != Tok::string) fail_here("expected date part");
      Extract ex;
      ex.field = text::to_upper(advance().text);
      expect_kw("FROM");
      ex.expr = parse_expr();
      expect_symbol(")");
      return make_expr(std::move(ex), {begin, last_end()});
    }
    if ((upper == "CURRENT_TIME" || upper == "CURRENT_DATE" || upper == "CURRENT_TIMESTAMP") && !is_symbol("(", 1)) {
      ++pos_;
      return make_expr(SpecialValue{upper}, {begin, t.end});
    }
    if ((upper == "DATE" || upper == "TIMESTAMP" || upper == "TIME") && peek(1).kind == Tok::string) {
      ++pos_;
      const Token& v = advance();
      return make_expr(TypedLiteral{TypeName{upper, {}}, v.text}, {begin, v.end});
    }
    if (is_symbol("(", 1) && (!is_reserved(t.text) || in_list(kReservedCallable, t.text))) return parse_function();
    if (is_reserved(t.text)) fail_here("unexpected keyword " + upper + ", expected an expression");
    return parse_column_ref();
  }

  ExprPtr parse_column_ref() {
    const std::size_t begin = peek().begin;
    ColumnRef ref;
    ref.parts.push_back(parse_identifier("column name"));
    while (is_symbol(".") && !is_symbol("*", 1)) {
      ++pos_;
      ref.parts.push_back(parse_identifier("column name"));
    }
    if (ref.parts.size() > 3) fail(src_, begin, "identifier has too many parts");
    return make_expr(std::move(ref), {begin, last_end()});
  }

  ExprPtr parse_case() {
    const std::size_t begin = advance().begin;
    CaseWhen c;
    if (!is_kw("WHEN")) c.operand = parse_expr();
    if (!is_kw("WHEN")) fail_here("expected WHEN, found " + describe(peek()));
    while (accept_kw("WHEN")) {
      ExprPtr cond = parse_expr();
      expect_kw("THEN");
      c.whens.emplace_back(std::move(cond), parse_expr());
    }
    if (accept_kw("ELSE")) c.else_expr = parse_expr();
    expect_kw("END");
    return make_expr(std::move(c), {begin, last_end()});
  }

  ExprPtr parse_function() {
    const Token& name = advance();
    const std::size_t begin = name.begin;
    FunctionCall call;
    call.name = name.text;
    expect_symbol("(");
    if (accept_symbol("*")) {
      call.star_arg = true;
    } else if (!is_symbol(")")) {
      if (accept_kw("DISTINCT")) {
        call.distinct = true;
      } else {
        accept_kw("ALL");
      }
      do call.args.push_back(parse_expr());
      while (accept_symbol(","));
      if (is_kw("ORDER")) fail_here("ordered aggregates are not supported");
    }
    expect_symbol(")");
    if (is_kw("FILTER")) fail_here("aggregate FILTER clauses are not supported");
    if (accept_kw("OVER")) {
      expect_symbol("(");
      WindowSpec w;
      if (accept_kw("PARTITION")) {
        expect_kw("BY");
        do w.partition_by.push_back(parse_expr());
        while (accept_symbol(","));
      }
      if (accept_kw("ORDER")) {
        expect_kw("BY");
        w.order_by = parse_order_list();
      }
      if (is_kw("ROWS") || is_kw("RANGE") || is_kw("GROUPS")) fail_here("window frames are not supported");
      expect_symbol(")");
      call.over = std::move(w);
    }
    return make_expr(std::move(call), {begin, last_end()});
  }

  std::string_view src_;
  Dialect dialect_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

QueryPtr parse_sql(std::string_view sql, Dialect dialect) {
  Parser p(sql, dialect);
  return p.parse_statement();
}

}  // namespace nlsql::sql
