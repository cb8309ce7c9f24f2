#include "nlsql/sql_postprocess.hpp"

#include <map>
#include <optional>

#include "nlsql/error.hpp"
#include "nlsql/sql_ast.hpp"
#include "nlsql/text.hpp"

namespace nlsql::postprocess {

std::string extract_sql(std::string_view completion) {
  constexpr std::string_view kOpen = "```sql";
  constexpr std::string_view kClose = "```";
  std::optional<std::string_view> last;
  std::size_t pos = 0;
  while (true) {
    std::size_t open = std::string_view::npos;
    // the opener must end its line: "```sql" then optional spaces then a newline
    for (std::size_t p = pos; p < completion.size();) {
      std::size_t hit = std::string_view::npos;
      for (std::size_t q = p; q + kOpen.size() <= completion.size(); ++q) {
        if (text::iequals(completion.substr(q, kOpen.size()), kOpen)) {
          hit = q;
          break;
        }
      }
      if (hit == std::string_view::npos) break;
      std::size_t k = hit + kOpen.size();
      while (k < completion.size() && (completion[k] == ' ' || completion[k] == '\t' || completion[k] == '\r')) ++k;
      if (k < completion.size() && completion[k] == '\n') {
        open = k + 1;
        break;
      }
      p = hit + kOpen.size();
    }
    if (open == std::string_view::npos) break;
    const std::size_t close = completion.find(kClose, open);
    if (close == std::string_view::npos) break;  // unterminated block is ignored
    last = completion.substr(open, close - open);
    pos = close + kClose.size();
  }
  if (!last) throw ExtractionError("completion has no ```sql fenced block");
  const std::string_view body = text::trim(*last);
  if (body.empty()) throw ExtractionError("```sql fenced block is empty");
  return std::string(body);
}

namespace {

using namespace nlsql::sql;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using Columns = std::vector<std::string>;

struct Source {
  std::string alias;
  const schema::TableSchema* table = nullptr;  // base table known to the catalog
  std::string base_name;                        // base table as written, empty for derived/CTE sources
  std::optional<Columns> columns;               // nullopt when unknown
};

struct Scope {
  std::vector<Source> sources;
  std::vector<std::string> select_aliases;
  const Scope* parent = nullptr;
};

struct CteEnv {
  std::map<std::string, Columns, text::ILess> ctes;
  const CteEnv* parent = nullptr;

  const Columns* find(std::string_view name) const {
    for (const CteEnv* e = this; e; e = e->parent) {
      auto it = e->ctes.find(name);
      if (it != e->ctes.end()) return &it->second;
    }
    return nullptr;
  }
};

bool contains_ci(const Columns& cols, std::string_view name) {
  for (const auto& c : cols) {
    if (text::iequals(c, name)) return true;
  }
  return false;
}

class Analyzer {
 public:
  Analyzer(const schema::SchemaCatalog* catalog, bool flag_star, IdentifierSet& ids, std::vector<Violation>& v)
      : catalog_(catalog), flag_star_(flag_star), ids_(ids), violations_(v) {}

  Columns query(const Query& q, const Scope* outer, const CteEnv* env) {
    CteEnv local;
    local.parent = env;
    for (const auto& cte : q.ctes) {
      if (q.recursive) local.ctes[cte.name.name] = {};  // self-reference resolves to an opaque source
      Columns out = query(*cte.query, outer, &local);
      if (!cte.columns.empty()) {
        out.clear();
        for (const auto& c : cte.columns) out.push_back(c.name);
      }
      local.ctes[cte.name.name] = std::move(out);
    }
    Scope last_scope;
    Columns out = body(q.body, outer, &local, &last_scope);
    if (!q.order_by.empty() || q.limit || q.offset) {
      // ORDER BY sees the output columns and, for a plain SELECT, its FROM sources.
      Scope order_scope = last_scope;
      order_scope.parent = outer;
      order_scope.select_aliases.insert(order_scope.select_aliases.end(), out.begin(), out.end());
      for (const auto& o : q.order_by) expr(*o.expr, order_scope, &local);
      if (q.limit) expr(*q.limit, order_scope, &local);
      if (q.offset) expr(*q.offset, order_scope, &local);
    }
    return out;
  }

 private:
  Columns body(const QueryBody& b, const Scope* outer, const CteEnv* env, Scope* scope_out) {
    return std::visit(overloaded{
                          [&](const SelectCore& c) { return core(c, outer, env, scope_out); },
                          [&](const QueryPtr& q) { return query(*q, outer, env); },
                          [&](const SetOperation& s) {
                            Columns left = body(*s.left, outer, env, scope_out);
                            Scope ignored;
                            body(*s.right, outer, env, &ignored);
                            return left;
                          },
                      },
                      b.node);
  }

  void add_table(const TableRef& t, Scope& scope, const CteEnv* env) {
    Source src;
    std::visit(overloaded{
                   [&](const NamedTable& n) {
                     const std::string& name = n.path.back().name;
                     src.alias = name;
                     const Columns* cte = n.path.size() == 1 ? env->find(name) : nullptr;
                     if (cte) {
                       src.columns = *cte;
                       return;
                     }
                     src.base_name = name;
                     const bool schema_ok = n.path.size() == 1 || (n.path.size() == 2 && text::iequals(n.path[0].name, "main"));
                     if (catalog_) {
                       src.table = schema_ok ? catalog_->find_table(name) : nullptr;
                       if (!src.table) {
                         violate(name, "unknown table");
                         src.columns = Columns{};
                       } else {
                         Columns cols;
                         for (const auto& c : src.table->columns) cols.push_back(c.name);
                         src.columns = std::move(cols);
                       }
                     }
                     ids_.tables.insert(src.table ? src.table->name : name);
                   },
                   [&](const DerivedTable& d) { src.columns = query(*d.query, scope.parent, env); },
               },
               t.source);
    if (t.alias) src.alias = t.alias->name;
    if (!t.column_aliases.empty()) {
      Columns cols;
      for (const auto& c : t.column_aliases) cols.push_back(c.name);
      src.columns = std::move(cols);
    }
    scope.sources.push_back(std::move(src));
    for (const auto& j : t.joins) {
      add_table(*j.table, scope, env);
      for (const auto& u : j.using_columns) column_ref({u}, scope, env);
    }
  }

  Columns core(const SelectCore& c, const Scope* outer, const CteEnv* env, Scope* scope_out) {
    Scope scope;
    scope.parent = outer;
    for (const auto& t : c.from) add_table(t, scope, env);
    for (const auto& item : c.items) {
      if (item.alias) scope.select_aliases.push_back(item.alias->name);
    }
    // join conditions see every source of the FROM clause
    for (const auto& t : c.from) join_conditions(t, scope, env);

    Columns out;
    for (const auto& item : c.items) {
      if (const auto* star = std::get_if<Star>(&item.expr->node)) {
        if (flag_star_) violate("*", "star select");
        expand_star(*star, scope, out);
        continue;
      }
      expr(*item.expr, scope, env);
      if (item.alias) {
        out.push_back(item.alias->name);
      } else if (const auto* col = std::get_if<ColumnRef>(&item.expr->node)) {
        out.push_back(col->parts.back().name);
      } else {
        out.push_back(render_expr(*item.expr));
      }
    }
    if (c.where) expr(*c.where, scope, env);
    for (const auto& g : c.group_by) expr(*g, scope, env);
    if (c.having) expr(*c.having, scope, env);
    if (scope_out) *scope_out = scope;
    return out;
  }

  void join_conditions(const TableRef& t, const Scope& scope, const CteEnv* env) {
    for (const auto& j : t.joins) {
      if (j.on) expr(*j.on, scope, env);
      join_conditions(*j.table, scope, env);
    }
  }

  void expand_star(const Star& star, const Scope& scope, Columns& out) {
    for (const auto& s : scope.sources) {
      if (!star.qualifier.empty() && !text::iequals(s.alias, star.qualifier.back().name)) continue;
      if (s.columns) out.insert(out.end(), s.columns->begin(), s.columns->end());
    }
  }

  void expr(const Expr& e, const Scope& scope, const CteEnv* env) {
    std::visit(overloaded{
                   [&](const ColumnRef& c) { column_ref(c.parts, scope, env); },
                   [&](const FunctionCall& f) {
                     for (const auto& a : f.args) expr(*a, scope, env);
                     if (f.over) {
                       for (const auto& p : f.over->partition_by) expr(*p, scope, env);
                       for (const auto& o : f.over->order_by) expr(*o.expr, scope, env);
                     }
                   },
                   [&](const UnaryOp& u) { expr(*u.operand, scope, env); },
                   [&](const BinaryOp& b) {
                     expr(*b.left, scope, env);
                     expr(*b.right, scope, env);
                   },
                   [&](const CaseWhen& c) {
                     if (c.operand) expr(*c.operand, scope, env);
                     for (const auto& [w, t] : c.whens) {
                       expr(*w, scope, env);
                       expr(*t, scope, env);
                     }
                     if (c.else_expr) expr(*c.else_expr, scope, env);
                   },
                   [&](const Cast& c) { expr(*c.expr, scope, env); },
                   [&](const InList& in) {
                     expr(*in.expr, scope, env);
                     for (const auto& i : in.items) expr(*i, scope, env);
                   },
                   [&](const InSubquery& in) {
                     expr(*in.expr, scope, env);
                     query(*in.query, &scope, env);
                   },
                   [&](const Exists& ex) { query(*ex.query, &scope, env); },
                   [&](const ScalarSubquery& s) { query(*s.query, &scope, env); },
                   [&](const Between& b) {
                     expr(*b.expr, scope, env);
                     expr(*b.low, scope, env);
                     expr(*b.high, scope, env);
                   },
                   [&](const Like& l) {
                     expr(*l.expr, scope, env);
                     expr(*l.pattern, scope, env);
                     if (l.escape) expr(*l.escape, scope, env);
                   },
                   [&](const IsNull& n) { expr(*n.expr, scope, env); },
                   [&](const Interval& iv) { expr(*iv.value, scope, env); },
                   [&](const Extract& ex) { expr(*ex.expr, scope, env); },
                   [&](const Star& s) {
                     if (flag_star_) violate("*", "star select");
                     (void)s;
                   },
                   [&](const auto&) {},
               },
               e.node);
  }

  void column_ref(const std::vector<Identifier>& parts, const Scope& scope, const CteEnv*) {
    const std::string& column = parts.back().name;
    if (parts.size() >= 2) {
      const std::string& qualifier = parts[parts.size() - 2].name;
      for (const Scope* s = &scope; s; s = s->parent) {
        for (const auto& src : s->sources) {
          if (!text::iequals(src.alias, qualifier)) continue;
          if (src.table) {
            if (!src.table->find_column(column)) {
              violate(column, "unknown column");
            }
            ids_.columns.insert({src.table->name, src.table->find_column(column) ? src.table->find_column(column)->name : column});
          } else {
            if (src.columns && catalog_ && !contains_ci(*src.columns, column)) violate(column, "unknown column");
            ids_.columns.insert({src.base_name, column});
          }
          return;
        }
      }
      if (catalog_) violate(qualifier, "unknown table or alias");
      ids_.columns.insert({"", column});
      return;
    }

    // bare column: nearest scope that can supply it
    for (const Scope* s = &scope; s; s = s->parent) {
      const Source* owner = nullptr;
      std::size_t owners = 0;
      bool opaque = false;
      for (const auto& src : s->sources) {
        if (!src.columns) {
          opaque = true;
          continue;
        }
        if (contains_ci(*src.columns, column)) {
          owner = &src;
          ++owners;
        }
      }
      if (owners > 0) {
        const bool resolved = owners == 1 && owner->table;
        ids_.columns.insert({resolved ? owner->table->name : std::string(), resolved ? owner->table->find_column(column)->name : column});
        return;
      }
      if (contains_ci(s->select_aliases, column)) return;
      if (opaque && !catalog_) {
        // without a catalog, attribute the column to the only base table in scope when there is one
        const Source* only = nullptr;
        std::size_t bases = 0;
        for (const auto& src : s->sources) {
          if (!src.base_name.empty()) {
            only = &src;
            ++bases;
          }
        }
        ids_.columns.insert({bases == 1 && s->sources.size() == 1 ? only->base_name : std::string(), column});
        return;
      }
    }
    if (catalog_) violate(column, "unknown column");
    ids_.columns.insert({"", column});
  }

  void violate(const std::string& identifier, const std::string& reason) {
    Violation v{identifier, reason};
    for (const auto& existing : violations_) {
      if (existing == v) return;
    }
    violations_.push_back(std::move(v));
  }

  const schema::SchemaCatalog* catalog_;
  bool flag_star_;
  IdentifierSet& ids_;
  std::vector<Violation>& violations_;
};

}  // namespace

IdentifierSet collect_identifiers(std::string_view sql) {
  auto q = parse_sql(sql, Dialect::target);
  IdentifierSet ids;
  std::vector<Violation> ignored;
  Analyzer a(nullptr, false, ids, ignored);
  CteEnv root;
  a.query(*q, nullptr, &root);
  return ids;
}

GuardrailReport guardrail_check(std::string_view sql, const schema::SchemaCatalog& catalog, GuardrailOptions options) {
  GuardrailReport report;
  QueryPtr q;
  try {
    q = parse_sql(sql, Dialect::target);
  } catch (const ParseError& e) {
    report.violations.push_back({e.what(), "parse error"});
    report.passed = false;
    return report;
  }
  IdentifierSet ids;
  Analyzer a(&catalog, options.flag_star_select, ids, report.violations);
  CteEnv root;
  a.query(*q, nullptr, &root);
  report.referenced_tables = std::move(ids.tables);
  report.referenced_columns = std::move(ids.columns);
  report.passed = report.violations.empty();
  return report;
}

std::string GuardrailReport::error_message() const {
  if (passed || violations.empty()) return {};
  const Violation& v = violations.front();
  if (v.reason == "parse error") return "query could not be parsed: " + v.identifier;
  if (v.reason == "star select") return "query selects all columns with *; name the needed columns instead";
  return "query references unknown identifier " + v.identifier;
}

}  // namespace nlsql::postprocess
