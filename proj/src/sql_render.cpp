#include <string>
#include <type_traits>

#include "nlsql/sql_ast.hpp"
#include "nlsql/text.hpp"

namespace nlsql::sql {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

constexpr int kAtom = 10;

int binary_precedence(std::string_view op) {
  if (op == "OR") return 1;
  if (op == "AND") return 2;
  if (op == "||") return 5;
  if (op == "+" || op == "-") return 6;
  if (op == "*" || op == "/" || op == "%") return 7;
  return 4;  // comparisons, IS, IS NOT
}

int precedence(const Expr& e) {
  return std::visit(overloaded{
                        [](const BinaryOp& b) { return binary_precedence(b.op); },
                        [](const UnaryOp& u) { return u.op == "NOT" ? 3 : 8; },
                        [](const InList&) { return 4; },
                        [](const InSubquery&) { return 4; },
                        [](const Between&) { return 4; },
                        [](const Like&) { return 4; },
                        [](const IsNull&) { return 4; },
                        [](const auto&) { return kAtom; },
                    },
                    e.node);
}

std::string quote_string(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += '\'';
    out += c;
  }
  out += '\'';
  return out;
}

std::string render_type(const TypeName& t) {
  std::string out = t.name;
  if (!t.params.empty()) out += "(" + text::join(t.params, ", ") + ")";
  return out;
}

class Renderer {
 public:
  explicit Renderer(Dialect d) : d_(d) {}

  std::string ident(const Identifier& id) const {
    QuoteStyle style = id.quote;
    if (style == QuoteStyle::none) return id.name;
    if (d_ == Dialect::target) style = QuoteStyle::double_quote;
    const char open = style == QuoteStyle::double_quote ? '"' : style == QuoteStyle::backtick ? '`' : '[';
    const char close = style == QuoteStyle::bracket ? ']' : open;
    std::string out(1, open);
    for (char c : id.name) {
      if (c == close && style != QuoteStyle::bracket) out += c;
      out += c;
    }
    out += close;
    return out;
  }

  std::string path(const std::vector<Identifier>& parts) const {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) out += '.';
      out += ident(parts[i]);
    }
    return out;
  }

  std::string wrap(const Expr& e, int min_prec) const {
    std::string s = expr(e);
    return precedence(e) < min_prec ? "(" + s + ")" : s;
  }

  std::string list(const std::vector<ExprPtr>& items) const {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ", ";
      out += expr(*items[i]);
    }
    return out;
  }

  std::string order_list(const std::vector<OrderItem>& items) const {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ", ";
      out += expr(*items[i].expr);
      if (items[i].explicit_direction || items[i].descending) out += items[i].descending ? " DESC" : " ASC";
      if (items[i].nulls_first) out += *items[i].nulls_first ? " NULLS FIRST" : " NULLS LAST";
    }
    return out;
  }

  std::string expr(const Expr& e) const {
    return std::visit(
        overloaded{
            [&](const Literal& l) -> std::string {
              return l.kind == Literal::Kind::string ? quote_string(l.text) : l.text;
            },
            [&](const ColumnRef& c) -> std::string { return path(c.parts); },
            [&](const Star& s) -> std::string { return s.qualifier.empty() ? "*" : path(s.qualifier) + ".*"; },
            [&](const FunctionCall& f) -> std::string {
              std::string out = text::to_upper(f.name) + "(";
              if (f.star_arg) {
                out += "*";
              } else {
                if (f.distinct) out += "DISTINCT ";
                out += list(f.args);
              }
              out += ")";
              if (f.over) {
                std::string w;
                if (!f.over->partition_by.empty()) w += "PARTITION BY " + list(f.over->partition_by);
                if (!f.over->order_by.empty()) {
                  if (!w.empty()) w += " ";
                  w += "ORDER BY " + order_list(f.over->order_by);
                }
                out += " OVER (" + w + ")";
              }
              return out;
            },
            [&](const UnaryOp& u) -> std::string {
              if (u.op == "NOT") return "NOT " + wrap(*u.operand, 3);
              const bool nested = std::holds_alternative<UnaryOp>(u.operand->node);
              std::string inner = nested ? "(" + expr(*u.operand) + ")" : wrap(*u.operand, 8);
              return u.op + inner;
            },
            [&](const BinaryOp& b) -> std::string {
              const int p = binary_precedence(b.op);
              auto side = [&](const Expr& child, int min) {
                const int cp = precedence(child);
                // keep || and arithmetic apart: the two dialects rank them differently
                const bool mixed = (p == 5 && (cp == 6 || cp == 7)) || ((p == 6 || p == 7) && cp == 5);
                return mixed ? "(" + expr(child) + ")" : wrap(child, min);
              };
              const int right_min = p == 4 ? 5 : p + 1;
              return side(*b.left, p) + " " + b.op + " " + side(*b.right, right_min);
            },
            [&](const CaseWhen& c) -> std::string {
              std::string out = "CASE";
              if (c.operand) out += " " + expr(*c.operand);
              for (const auto& [cond, res] : c.whens) out += " WHEN " + expr(*cond) + " THEN " + expr(*res);
              if (c.else_expr) out += " ELSE " + expr(*c.else_expr);
              return out + " END";
            },
            [&](const Cast& c) -> std::string {
              return std::string(c.try_cast ? "TRY_CAST(" : "CAST(") + expr(*c.expr) + " AS " + render_type(c.type) +
                     ")";
            },
            [&](const TypedLiteral& t) -> std::string { return render_type(t.type) + " " + quote_string(t.value); },
            [&](const InList& in) -> std::string {
              return wrap(*in.expr, 4) + (in.negated ? " NOT IN (" : " IN (") + list(in.items) + ")";
            },
            [&](const InSubquery& in) -> std::string {
              return wrap(*in.expr, 4) + (in.negated ? " NOT IN (" : " IN (") + query(*in.query) + ")";
            },
            [&](const Exists& ex) -> std::string { return "EXISTS (" + query(*ex.query) + ")"; },
            [&](const ScalarSubquery& s) -> std::string { return "(" + query(*s.query) + ")"; },
            [&](const Between& b) -> std::string {
              return wrap(*b.expr, 4) + (b.negated ? " NOT BETWEEN " : " BETWEEN ") + wrap(*b.low, 5) + " AND " +
                     wrap(*b.high, 5);
            },
            [&](const Like& l) -> std::string {
              std::string out = wrap(*l.expr, 4) + (l.negated ? " NOT " : " ") + l.op + " " + wrap(*l.pattern, 5);
              if (l.escape) out += " ESCAPE " + wrap(*l.escape, 5);
              return out;
            },
            [&](const IsNull& n) -> std::string { return wrap(*n.expr, 4) + (n.negated ? " IS NOT NULL" : " IS NULL"); },
            [&](const Interval& iv) -> std::string {
              const bool literal = std::holds_alternative<Literal>(iv.value->node);
              std::string out = "INTERVAL " + (literal ? expr(*iv.value) : "(" + expr(*iv.value) + ")");
              if (!iv.unit.empty()) out += " " + iv.unit;
              return out;
            },
            [&](const Extract& ex) -> std::string { return "EXTRACT(" + ex.field + " FROM " + expr(*ex.expr) + ")"; },
            [&](const SpecialValue& s) -> std::string { return s.keyword; },
        },
        e.node);
  }

  std::string table_ref(const TableRef& t) const {
    std::string out = std::visit(overloaded{
                                     [&](const NamedTable& n) { return path(n.path); },
                                     [&](const DerivedTable& d) { return "(" + query(*d.query) + ")"; },
                                 },
                                 t.source);
    if (t.alias) {
      out += " AS " + ident(*t.alias);
      if (!t.column_aliases.empty()) out += "(" + idents(t.column_aliases) + ")";
    }
    for (const auto& j : t.joins) {
      out += " ";
      if (j.natural) out += "NATURAL ";
      switch (j.kind) {
        case JoinKind::inner: out += j.explicit_inner ? "INNER JOIN " : "JOIN "; break;
        case JoinKind::left: out += "LEFT JOIN "; break;
        case JoinKind::right: out += "RIGHT JOIN "; break;
        case JoinKind::full: out += "FULL JOIN "; break;
        case JoinKind::cross: out += "CROSS JOIN "; break;
      }
      out += table_ref(*j.table);
      if (j.on) out += " ON " + expr(*j.on);
      if (!j.using_columns.empty()) out += " USING (" + idents(j.using_columns) + ")";
    }
    return out;
  }

  std::string idents(const std::vector<Identifier>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ", ";
      out += ident(ids[i]);
    }
    return out;
  }

  std::string core(const SelectCore& c) const {
    std::string out = c.distinct ? "SELECT DISTINCT " : "SELECT ";
    for (std::size_t i = 0; i < c.items.size(); ++i) {
      if (i) out += ", ";
      out += expr(*c.items[i].expr);
      if (c.items[i].alias) out += " AS " + ident(*c.items[i].alias);
    }
    if (!c.from.empty()) {
      out += " FROM ";
      for (std::size_t i = 0; i < c.from.size(); ++i) {
        if (i) out += ", ";
        out += table_ref(c.from[i]);
      }
    }
    if (c.where) out += " WHERE " + expr(*c.where);
    if (!c.group_by.empty()) out += " GROUP BY " + list(c.group_by);
    if (c.having) out += " HAVING " + expr(*c.having);
    return out;
  }

  std::string body(const QueryBody& b, bool right_operand) const {
    return std::visit(overloaded{
                          [&](const SelectCore& c) { return core(c); },
                          [&](const QueryPtr& q) { return "(" + query(*q) + ")"; },
                          [&](const SetOperation& s) {
                            std::string out = body(*s.left, false);
                            switch (s.op) {
                              case SetOpKind::union_: out += " UNION "; break;
                              case SetOpKind::intersect: out += " INTERSECT "; break;
                              case SetOpKind::except: out += " EXCEPT "; break;
                            }
                            if (s.all) out += "ALL ";
                            out += body(*s.right, true);
                            return right_operand ? "(" + out + ")" : out;
                          },
                      },
                      b.node);
  }

  std::string query(const Query& q) const {
    std::string out;
    if (!q.ctes.empty()) {
      out += q.recursive ? "WITH RECURSIVE " : "WITH ";
      for (std::size_t i = 0; i < q.ctes.size(); ++i) {
        if (i) out += ", ";
        out += ident(q.ctes[i].name);
        if (!q.ctes[i].columns.empty()) out += "(" + idents(q.ctes[i].columns) + ")";
        out += " AS (" + query(*q.ctes[i].query) + ")";
      }
      out += " ";
    }
    out += body(q.body, false);
    if (!q.order_by.empty()) out += " ORDER BY " + order_list(q.order_by);
    if (q.limit) out += " LIMIT " + expr(*q.limit);
    if (q.offset) out += " OFFSET " + expr(*q.offset);
    return out;
  }

 private:
  Dialect d_;
};

// ---- structural dump ----

class Dumper {
 public:
  std::string out;

  void id(const Identifier& i) {
    if (i.quote == QuoteStyle::none) {
      out += i.name;
    } else {
      out += "\"" + i.name + "\"";
    }
  }
  void ids(const std::vector<Identifier>& v) {
    out += "[";
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k) out += " ";
      id(v[k]);
    }
    out += "]";
  }
  void opt(const ExprPtr& e) {
    if (e) {
      expr(*e);
    } else {
      out += "_";
    }
  }
  void exprs(const std::vector<ExprPtr>& v) {
    out += "[";
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k) out += " ";
      expr(*v[k]);
    }
    out += "]";
  }
  void order(const std::vector<OrderItem>& v) {
    out += "[";
    for (const auto& o : v) {
      out += "(order ";
      expr(*o.expr);
      out += o.descending ? " desc" : " asc";
      if (o.nulls_first) out += *o.nulls_first ? " nulls-first" : " nulls-last";
      out += ")";
    }
    out += "]";
  }
  void type(const TypeName& t) { out += "<" + t.name + (t.params.empty() ? "" : "(" + text::join(t.params, ",") + ")") + ">"; }

  void expr(const Expr& e) {
    std::visit(overloaded{
                   [&](const Literal& l) {
                     static constexpr const char* kinds[] = {"num", "str", "null", "bool"};
                     out += std::string("(") + kinds[static_cast<int>(l.kind)] + " '" + l.text + "')";
                   },
                   [&](const ColumnRef& c) {
                     out += "(col ";
                     ids(c.parts);
                     out += ")";
                   },
                   [&](const Star& s) {
                     out += "(star ";
                     ids(s.qualifier);
                     out += ")";
                   },
                   [&](const FunctionCall& f) {
                     out += "(call " + text::to_upper(f.name) + (f.distinct ? " distinct" : "") +
                            (f.star_arg ? " *" : "") + " ";
                     exprs(f.args);
                     if (f.over) {
                       out += " (over ";
                       exprs(f.over->partition_by);
                       out += " ";
                       order(f.over->order_by);
                       out += ")";
                     }
                     out += ")";
                   },
                   [&](const UnaryOp& u) {
                     out += "(unary " + u.op + " ";
                     expr(*u.operand);
                     out += ")";
                   },
                   [&](const BinaryOp& b) {
                     out += "(binary " + b.op + " ";
                     expr(*b.left);
                     out += " ";
                     expr(*b.right);
                     out += ")";
                   },
                   [&](const CaseWhen& c) {
                     out += "(case ";
                     opt(c.operand);
                     for (const auto& [w, t] : c.whens) {
                       out += " (when ";
                       expr(*w);
                       out += " ";
                       expr(*t);
                       out += ")";
                     }
                     out += " ";
                     opt(c.else_expr);
                     out += ")";
                   },
                   [&](const Cast& c) {
                     out += c.try_cast ? "(try-cast " : "(cast ";
                     expr(*c.expr);
                     out += " ";
                     type(c.type);
                     out += ")";
                   },
                   [&](const TypedLiteral& t) {
                     out += "(typed ";
                     type(t.type);
                     out += " '" + t.value + "')";
                   },
                   [&](const InList& in) {
                     out += in.negated ? "(not-in " : "(in ";
                     expr(*in.expr);
                     out += " ";
                     exprs(in.items);
                     out += ")";
                   },
                   [&](const InSubquery& in) {
                     out += in.negated ? "(not-in-query " : "(in-query ";
                     expr(*in.expr);
                     out += " ";
                     query(*in.query);
                     out += ")";
                   },
                   [&](const Exists& ex) {
                     out += "(exists ";
                     query(*ex.query);
                     out += ")";
                   },
                   [&](const ScalarSubquery& s) {
                     out += "(subquery ";
                     query(*s.query);
                     out += ")";
                   },
                   [&](const Between& b) {
                     out += b.negated ? "(not-between " : "(between ";
                     expr(*b.expr);
                     out += " ";
                     expr(*b.low);
                     out += " ";
                     expr(*b.high);
                     out += ")";
                   },
                   [&](const Like& l) {
                     out += "(" + std::string(l.negated ? "not-" : "") + text::to_lower(l.op) + " ";
                     expr(*l.expr);
                     out += " ";
                     expr(*l.pattern);
                     out += " ";
                     opt(l.escape);
                     out += ")";
                   },
                   [&](const IsNull& n) {
                     out += n.negated ? "(is-not-null " : "(is-null ";
                     expr(*n.expr);
                     out += ")";
                   },
                   [&](const Interval& iv) {
                     out += "(interval ";
                     expr(*iv.value);
                     out += " " + (iv.unit.empty() ? std::string("_") : iv.unit) + ")";
                   },
                   [&](const Extract& ex) {
                     out += "(extract " + ex.field + " ";
                     expr(*ex.expr);
                     out += ")";
                   },
                   [&](const SpecialValue& s) { out += "(special " + s.keyword + ")"; },
               },
               e.node);
  }

  void table(const TableRef& t) {
    out += "(table ";
    std::visit(overloaded{
                   [&](const NamedTable& n) { ids(n.path); },
                   [&](const DerivedTable& d) { query(*d.query); },
               },
               t.source);
    out += " ";
    if (t.alias) {
      id(*t.alias);
    } else {
      out += "_";
    }
    if (!t.column_aliases.empty()) ids(t.column_aliases);
    for (const auto& j : t.joins) {
      static constexpr const char* kinds[] = {"inner", "left", "right", "full", "cross"};
      out += std::string(" (join ") + (j.natural ? "natural-" : "") + kinds[static_cast<int>(j.kind)] + " ";
      table(*j.table);
      out += " ";
      opt(j.on);
      out += " ";
      ids(j.using_columns);
      out += ")";
    }
    out += ")";
  }

  void body(const QueryBody& b) {
    std::visit(overloaded{
                   [&](const SelectCore& c) {
                     out += c.distinct ? "(select-distinct [" : "(select [";
                     for (std::size_t k = 0; k < c.items.size(); ++k) {
                       if (k) out += " ";
                       out += "(item ";
                       expr(*c.items[k].expr);
                       out += " ";
                       if (c.items[k].alias) {
                         id(*c.items[k].alias);
                       } else {
                         out += "_";
                       }
                       out += ")";
                     }
                     out += "] [";
                     for (std::size_t k = 0; k < c.from.size(); ++k) {
                       if (k) out += " ";
                       table(c.from[k]);
                     }
                     out += "] ";
                     opt(c.where);
                     out += " ";
                     exprs(c.group_by);
                     out += " ";
                     opt(c.having);
                     out += ")";
                   },
                   [&](const QueryPtr& q) {
                     out += "(nested ";
                     query(*q);
                     out += ")";
                   },
                   [&](const SetOperation& s) {
                     static constexpr const char* kinds[] = {"union", "intersect", "except"};
                     out += std::string("(") + kinds[static_cast<int>(s.op)] + (s.all ? "-all " : " ");
                     body(*s.left);
                     out += " ";
                     body(*s.right);
                     out += ")";
                   },
               },
               b.node);
  }

  void query(const Query& q) {
    out += "(query";
    if (!q.ctes.empty()) {
      out += q.recursive ? " (with-recursive" : " (with";
      for (const auto& c : q.ctes) {
        out += " (cte ";
        id(c.name);
        out += " ";
        ids(c.columns);
        out += " ";
        query(*c.query);
        out += ")";
      }
      out += ")";
    }
    out += " ";
    body(q.body);
    out += " ";
    order(q.order_by);
    out += " ";
    opt(q.limit);
    out += " ";
    opt(q.offset);
    out += ")";
  }
};

// ---- traversal ----

using Fn = std::function<void(ExprPtr&)>;
void walk_query(Query& q, const Fn& fn);

void walk_slot(ExprPtr& slot, const Fn& fn);

void walk_children(Expr& e, const Fn& fn) {
  std::visit(overloaded{
                 [&](FunctionCall& f) {
                   for (auto& a : f.args) walk_slot(a, fn);
                   if (f.over) {
                     for (auto& p : f.over->partition_by) walk_slot(p, fn);
                     for (auto& o : f.over->order_by) walk_slot(o.expr, fn);
                   }
                 },
                 [&](UnaryOp& u) { walk_slot(u.operand, fn); },
                 [&](BinaryOp& b) {
                   walk_slot(b.left, fn);
                   walk_slot(b.right, fn);
                 },
                 [&](CaseWhen& c) {
                   walk_slot(c.operand, fn);
                   for (auto& [w, t] : c.whens) {
                     walk_slot(w, fn);
                     walk_slot(t, fn);
                   }
                   walk_slot(c.else_expr, fn);
                 },
                 [&](Cast& c) { walk_slot(c.expr, fn); },
                 [&](InList& in) {
                   walk_slot(in.expr, fn);
                   for (auto& i : in.items) walk_slot(i, fn);
                 },
                 [&](InSubquery& in) {
                   walk_slot(in.expr, fn);
                   walk_query(*in.query, fn);
                 },
                 [&](Exists& ex) { walk_query(*ex.query, fn); },
                 [&](ScalarSubquery& s) { walk_query(*s.query, fn); },
                 [&](Between& b) {
                   walk_slot(b.expr, fn);
                   walk_slot(b.low, fn);
                   walk_slot(b.high, fn);
                 },
                 [&](Like& l) {
                   walk_slot(l.expr, fn);
                   walk_slot(l.pattern, fn);
                   walk_slot(l.escape, fn);
                 },
                 [&](IsNull& n) { walk_slot(n.expr, fn); },
                 [&](Interval& iv) { walk_slot(iv.value, fn); },
                 [&](Extract& ex) { walk_slot(ex.expr, fn); },
                 [&](auto&) {},
             },
             e.node);
}

void walk_slot(ExprPtr& slot, const Fn& fn) {
  if (!slot) return;
  walk_children(*slot, fn);
  fn(slot);
}

void walk_table(TableRef& t, const Fn& fn) {
  if (auto* d = std::get_if<DerivedTable>(&t.source)) walk_query(*d->query, fn);
  for (auto& j : t.joins) {
    walk_table(*j.table, fn);
    walk_slot(j.on, fn);
  }
}

void walk_body(QueryBody& b, const Fn& fn) {
  std::visit(overloaded{
                 [&](SelectCore& c) {
                   for (auto& item : c.items) walk_slot(item.expr, fn);
                   for (auto& t : c.from) walk_table(t, fn);
                   walk_slot(c.where, fn);
                   for (auto& g : c.group_by) walk_slot(g, fn);
                   walk_slot(c.having, fn);
                 },
                 [&](QueryPtr& q) { walk_query(*q, fn); },
                 [&](SetOperation& s) {
                   walk_body(*s.left, fn);
                   walk_body(*s.right, fn);
                 },
             },
             b.node);
}

void walk_query(Query& q, const Fn& fn) {
  for (auto& c : q.ctes) walk_query(*c.query, fn);
  walk_body(q.body, fn);
  for (auto& o : q.order_by) walk_slot(o.expr, fn);
  walk_slot(q.limit, fn);
  walk_slot(q.offset, fn);
}

}  // namespace

std::string render_sql(const Query& query, Dialect dialect) { return Renderer(dialect).query(query); }

std::string render_expr(const Expr& expr, Dialect dialect) { return Renderer(dialect).expr(expr); }

std::string debug_tree(const Query& query) {
  Dumper d;
  d.query(query);
  return d.out;
}

void for_each_expr(Query& query, const std::function<void(ExprPtr&)>& fn) { walk_query(query, fn); }

}  // namespace nlsql::sql
