#include "nlsql/dialect_transpiler.hpp"

#include <array>
#include <charconv>
#include <cstdlib>

#include "nlsql/error.hpp"
#include "nlsql/text.hpp"

namespace nlsql::sql {

namespace {

constexpr std::array kFamilies = {
    RuleFamily::current_time,  RuleFamily::datetime_cast, RuleFamily::datetime_start_of,
    RuleFamily::datetime_offset, RuleFamily::datetime_noop, RuleFamily::strftime_args,
};

// SQLite date/time functions with no rule; failing loudly beats emitting a wrong query.
constexpr std::array kUnmapped = {"date", "time", "julianday", "unixepoch"};

constexpr std::array kOffsetUnits = {"year", "years", "month", "months", "day", "days",
                                     "hour", "hours", "minute", "minutes", "second", "seconds"};

class Rewriter {
 public:
  Rewriter(const TranspileOptions& options, std::set<RuleFamily>* fired) : options_(options), fired_(fired) {}

  bool changed = false;

  void operator()(ExprPtr& slot) {
    Expr& e = *slot;
    if (auto* sv = std::get_if<SpecialValue>(&e.node)) {
      if (sv->keyword == "CURRENT_TIME" && use(RuleFamily::current_time)) {
        sv->keyword = "CURRENT_TIMESTAMP";
        changed = true;
      }
      return;
    }
    auto* call = std::get_if<FunctionCall>(&e.node);
    if (!call) return;
    const std::string name = text::to_lower(call->name);
    for (const char* f : kUnmapped) {
      if (name == f) throw UnsupportedConstructError(name + "()");
    }
    if (name == "datetime") {
      if (call->over || call->distinct || call->star_arg) throw UnsupportedConstructError("datetime() with modifiers");
      if (call->args.empty()) throw UnsupportedConstructError("datetime() without arguments");
      const Span span = e.span;
      std::vector<ExprPtr> args = std::move(call->args);
      slot = fold_datetime(std::move(args), span, true);
      changed = true;
      return;
    }
    if (name == "strftime") rewrite_strftime(slot, *call);
  }

 private:
  bool enabled(RuleFamily f) const { return !options_.disabled.contains(f); }

  bool use(RuleFamily f) {
    if (!enabled(f)) return false;
    if (fired_) fired_->insert(f);
    return true;
  }

  void require(RuleFamily f, const std::string& construct) {
    if (!use(f)) throw UnsupportedConstructError(construct);
  }

  static const Literal* string_literal(const Expr& e) {
    const auto* lit = std::get_if<Literal>(&e.node);
    return lit && lit->kind == Literal::Kind::string ? lit : nullptr;
  }

  static ExprPtr cast_timestamp(ExprPtr e, Span span) {
    return make_expr(Cast{std::move(e), TypeName{"TIMESTAMP", {}}, false}, span);
  }

  ExprPtr base_value(ExprPtr base, Span span) {
    if (const Literal* lit = string_literal(*base); lit && text::iequals(text::trim(lit->text), "now")) {
      require(RuleFamily::current_time, "datetime('now')");
      return make_expr(SpecialValue{"CURRENT_TIMESTAMP"}, span);
    }
    return base;
  }

  // datetime(base, modifiers...) folded left to right.
  ExprPtr fold_datetime(std::vector<ExprPtr> args, Span span, bool cast_when_plain) {
    ExprPtr acc = base_value(std::move(args[0]), span);
    bool applied = false;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const Literal* lit = string_literal(*args[i]);
      if (!lit) throw UnsupportedConstructError("datetime modifier expression " + render_expr(*args[i], Dialect::source));
      const std::string mod = text::to_lower(text::trim(lit->text));
      const std::string quoted = "datetime modifier '" + lit->text + "'";

      if (mod.starts_with("start of ")) {
        const std::string unit(text::trim(std::string_view(mod).substr(9)));
        if (unit != "day" && unit != "month" && unit != "year") throw UnsupportedConstructError(quoted);
        require(RuleFamily::datetime_start_of, quoted);
        if (string_literal(*acc)) acc = cast_timestamp(std::move(acc), span);
        FunctionCall trunc;
        trunc.name = "DATE_TRUNC";
        trunc.args.push_back(make_expr(Literal{Literal::Kind::string, unit}, span));
        trunc.args.push_back(std::move(acc));
        acc = make_expr(std::move(trunc), span);
        applied = true;
        continue;
      }

      // [+|-]N unit
      std::string_view rest = mod;
      bool negative = false;
      if (!rest.empty() && (rest.front() == '+' || rest.front() == '-')) {
        negative = rest.front() == '-';
        rest.remove_prefix(1);
      }
      const auto space = rest.find(' ');
      if (space == std::string_view::npos) throw UnsupportedConstructError(quoted);
      const std::string_view number = rest.substr(0, space);
      const std::string unit(text::trim(rest.substr(space + 1)));
      long long amount = 0;
      const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), amount);
      bool known_unit = false;
      for (const char* u : kOffsetUnits) known_unit = known_unit || unit == u;
      if (ec != std::errc{} || ptr != number.data() + number.size() || !known_unit || amount < 0) {
        throw UnsupportedConstructError(quoted);
      }
      if (amount == 0) {
        require(RuleFamily::datetime_noop, quoted);
        continue;
      }
      require(RuleFamily::datetime_offset, quoted);
      if (string_literal(*acc)) acc = cast_timestamp(std::move(acc), span);
      ExprPtr interval =
          make_expr(Interval{make_expr(Literal{Literal::Kind::string, std::to_string(amount) + " " + unit}, span), ""},
                    span);
      acc = make_expr(BinaryOp{negative ? "-" : "+", std::move(acc), std::move(interval)}, span);
      applied = true;
    }
    if (!applied && cast_when_plain) {
      require(RuleFamily::datetime_cast, "datetime()");
      acc = cast_timestamp(std::move(acc), span);
    }
    return acc;
  }

  // strftime(fmt, time[, modifiers]) -> STRFTIME(time', fmt). Calls whose first argument is not a
  // %-format literal are already in target order and stay as they are.
  void rewrite_strftime(ExprPtr& slot, FunctionCall& call) {
    if (call.args.size() < 2) return;
    const Literal* fmt = string_literal(*call.args[0]);
    if (!fmt || fmt->text.find('%') == std::string::npos) return;
    require(RuleFamily::strftime_args, "strftime(format, time)");
    const Span span = slot->span;
    ExprPtr format = std::move(call.args[0]);
    std::vector<ExprPtr> rest;
    for (std::size_t i = 1; i < call.args.size(); ++i) rest.push_back(std::move(call.args[i]));
    const bool plain = rest.size() == 1;
    ExprPtr time = fold_datetime(std::move(rest), span, false);
    if (plain && (std::holds_alternative<ColumnRef>(time->node) || string_literal(*time))) {
      time = cast_timestamp(std::move(time), span);
    }
    FunctionCall out;
    out.name = "STRFTIME";
    out.args.push_back(std::move(time));
    out.args.push_back(std::move(format));
    slot = make_expr(std::move(out), span);
    changed = true;
  }

  const TranspileOptions& options_;
  std::set<RuleFamily>* fired_;
};

}  // namespace

std::string_view to_string(RuleFamily family) {
  switch (family) {
    case RuleFamily::current_time: return "current_time";
    case RuleFamily::datetime_cast: return "datetime_cast";
    case RuleFamily::datetime_start_of: return "datetime_start_of";
    case RuleFamily::datetime_offset: return "datetime_offset";
    case RuleFamily::datetime_noop: return "datetime_noop";
    case RuleFamily::strftime_args: return "strftime_args";
  }
  return "unknown";
}

std::span<const RuleFamily> all_rule_families() { return kFamilies; }

void rewrite_to_target(Query& query, const TranspileOptions& options, std::set<RuleFamily>* fired) {
  constexpr int kMaxPasses = 16;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    Rewriter r(options, fired);
    for_each_expr(query, std::ref(r));
    if (!r.changed) return;
  }
  throw TranspileError("rewrite did not reach a fixpoint");
}

TranspileResult transpile_detailed(std::string_view source_sql, const TranspileOptions& options) {
  QueryPtr q;
  try {
    q = parse_sql(source_sql, Dialect::source);
  } catch (const ParseError& e) {
    throw TranspileError(std::string("parse error: ") + e.what());
  }
  TranspileResult result;
  rewrite_to_target(*q, options, &result.fired);
  result.sql = render_sql(*q, Dialect::target);
  return result;
}

std::string transpile(std::string_view source_sql, const TranspileOptions& options) {
  return transpile_detailed(source_sql, options).sql;
}

}  // namespace nlsql::sql
