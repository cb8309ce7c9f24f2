#include "nlsql/execution_sandbox.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "nlsql/dialect_transpiler.hpp"
#include "nlsql/error.hpp"
#include "nlsql/prompt_builder.hpp"
#include "nlsql/text.hpp"

namespace nlsql::exec {

std::string normalize_identifier_quotes(std::string_view sql) {
  std::string out;
  out.reserve(sql.size());
  std::size_t i = 0;
  const std::size_t n = sql.size();
  auto copy_quoted = [&](char q) {
    out += sql[i++];
    while (i < n) {
      out += sql[i];
      if (sql[i] == q) {
        if (i + 1 < n && sql[i + 1] == q) {
          out += sql[++i];
        } else {
          ++i;
          return;
        }
      }
      ++i;
    }
  };
  while (i < n) {
    const char c = sql[i];
    if (c == '\'' || c == '"') {
      copy_quoted(c);
    } else if (sql.substr(i, 2) == "--") {
      while (i < n && sql[i] != '\n') out += sql[i++];
    } else if (sql.substr(i, 2) == "/*") {
      const auto end = sql.find("*/", i + 2);
      const std::size_t stop = end == std::string_view::npos ? n : end + 2;
      out.append(sql.substr(i, stop - i));
      i = stop;
    } else if (c == '`') {
      std::string name;
      ++i;
      bool closed = false;
      while (i < n) {
        if (sql[i] == '`') {
          if (i + 1 < n && sql[i + 1] == '`') {
            name += '`';
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        name += sql[i++];
      }
      if (!closed) {
        out += '`';
        out += name;
        continue;
      }
      out += '"';
      for (char ch : name) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    } else {
      out += c;
      ++i;
    }
  }
  return out;
}

namespace {

bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  if (needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (text::iequals(haystack.substr(i, needle.size()), needle)) return true;
  }
  return false;
}

bool known_name(std::string_view part, const schema::SchemaCatalog* catalog) {
  if (!catalog) return false;
  for (const auto& t : catalog->tables()) {
    if (text::iequals(t.name, part)) return true;
    if (t.find_column(part)) return true;
  }
  return false;
}

bool safe_segment(std::string_view seg, std::string_view sql, const schema::SchemaCatalog* catalog) {
  if (seg.empty() || contains_ci(sql, seg)) return true;
  // dotted identifiers such as "cost.hadm_id" in binder suggestions
  std::size_t start = 0;
  while (true) {
    const auto dot = seg.find('.', start);
    const std::string_view part = seg.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (!(contains_ci(sql, part) || known_name(part, catalog)) || part.empty()) return false;
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

std::string redact_line(std::string_view line, std::string_view sql, const schema::SchemaCatalog* catalog) {
  std::string out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c != '\'' && c != '"') {
      out += c;
      ++i;
      continue;
    }
    const auto close = line.find(c, i + 1);
    const std::string_view seg =
        line.substr(i + 1, close == std::string_view::npos ? std::string_view::npos : close - i - 1);
    out += c;
    out += safe_segment(seg, sql, catalog) ? std::string(seg) : std::string("<redacted>");
    if (close == std::string_view::npos) break;
    out += c;
    i = close + 1;
  }
  return out;
}

}  // namespace

std::string redact_engine_message(std::string_view message, std::string_view sql,
                                  const schema::SchemaCatalog* catalog) {
  std::string out;
  std::size_t start = 0;
  while (start <= message.size()) {
    const auto nl = message.find('\n', start);
    const std::string_view line = message.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    // echoed query text ("LINE 1: ...") and caret markers carry only the SQL itself
    const std::string_view trimmed = text::trim(line);
    const bool caret = !trimmed.empty() && trimmed.find_first_not_of('^') == std::string_view::npos;
    if (line.starts_with("LINE ") || caret) {
      out += line;
    } else {
      out += redact_line(line, sql, catalog);
    }
    if (nl == std::string_view::npos) break;
    out += '\n';
    start = nl + 1;
  }
  return out;
}

namespace {

std::string first_keyword(std::string_view sql) {
  std::size_t i = 0;
  while (i < sql.size()) {
    if (text::is_space(sql[i]) || sql[i] == '(') {
      ++i;
    } else if (sql.substr(i, 2) == "--") {
      while (i < sql.size() && sql[i] != '\n') ++i;
    } else if (sql.substr(i, 2) == "/*") {
      const auto end = sql.find("*/", i + 2);
      i = end == std::string_view::npos ? sql.size() : end + 2;
    } else {
      break;
    }
  }
  std::size_t j = i;
  while (j < sql.size() && (std::isalpha(static_cast<unsigned char>(sql[j])) || sql[j] == '_')) ++j;
  return text::to_upper(sql.substr(i, j - i));
}

struct Extracted {
  duckdb_extracted_statements handle = nullptr;
  ~Extracted() {
    if (handle) duckdb_destroy_extracted(&handle);
  }
};

struct Prepared {
  duckdb_prepared_statement handle = nullptr;
  ~Prepared() {
    if (handle) duckdb_destroy_prepare(&handle);
  }
};

struct Pending {
  duckdb_pending_result handle = nullptr;
  ~Pending() {
    if (handle) duckdb_destroy_pending(&handle);
  }
};

struct Result {
  duckdb_result handle{};
  bool live = false;
  ~Result() {
    if (live) duckdb_destroy_result(&handle);
  }
};

}  // namespace

QueryResult execute_sql(std::string_view sql, db::Connection& connection, const ExecutionLimits& limits,
                        const schema::SchemaCatalog* catalog, double* elapsed_seconds) {
  const auto start = std::chrono::steady_clock::now();
  const std::string normalized = normalize_identifier_quotes(sql);
  auto fail = [&](std::string_view engine_message) -> ExecutionError {
    return ExecutionError(redact_engine_message(engine_message, normalized, catalog));
  };

  const std::string kw = first_keyword(normalized);
  if (kw != "SELECT" && kw != "WITH" && kw != "FROM" && kw != "VALUES") {
    throw PolicyError("only read-only SELECT statements may be executed" +
                      (kw.empty() ? std::string() : ", found " + kw));
  }

  duckdb_connection conn = connection.handle();
  Extracted extracted;
  const idx_t count = duckdb_extract_statements(conn, normalized.c_str(), &extracted.handle);
  if (count == 0) {
    const char* err = duckdb_extract_statements_error(extracted.handle);
    throw fail(err ? err : "empty statement");
  }
  if (count > 1) throw PolicyError("only a single statement may be executed, found " + std::to_string(count));

  Prepared prepared;
  if (duckdb_prepare_extracted_statement(conn, extracted.handle, 0, &prepared.handle) == DuckDBError) {
    const char* err = duckdb_prepare_error(prepared.handle);
    throw fail(err ? err : "prepare failed");
  }
  if (duckdb_prepared_statement_type(prepared.handle) != DUCKDB_STATEMENT_TYPE_SELECT) {
    throw PolicyError("only read-only SELECT statements may be executed");
  }

  Pending pending;
  if (duckdb_pending_prepared(prepared.handle, &pending.handle) == DuckDBError) {
    const char* err = duckdb_pending_error(pending.handle);
    throw fail(err ? err : "execution failed");
  }
  // a single task can run for a long time, so the interrupt comes from a watchdog thread
  std::atomic<bool> timed_out{false};
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::thread watchdog([&] {
    std::unique_lock lock(mu);
    if (!cv.wait_until(lock, start + limits.timeout, [&] { return done; })) {
      timed_out = true;
      duckdb_interrupt(conn);
    }
  });
  auto stop_watchdog = [&] {
    {
      std::lock_guard lock(mu);
      done = true;
    }
    cv.notify_all();
    if (watchdog.joinable()) watchdog.join();
  };
  struct Joiner {
    decltype(stop_watchdog)& f;
    ~Joiner() { f(); }
  } joiner{stop_watchdog};

  auto timeout_error = [&] {
    return QueryTimeoutError("query exceeded the " + std::to_string(limits.timeout.count()) + " ms time limit");
  };
  while (true) {
    const duckdb_pending_state state = duckdb_pending_execute_task(pending.handle);
    if (state == DUCKDB_PENDING_ERROR) {
      if (timed_out) throw timeout_error();
      const char* err = duckdb_pending_error(pending.handle);
      throw fail(err ? err : "execution failed");
    }
    if (duckdb_pending_execution_is_finished(state)) break;
    if (state == DUCKDB_PENDING_NO_TASKS_AVAILABLE) std::this_thread::yield();
  }
  Result result;
  const duckdb_state rc = duckdb_execute_pending(pending.handle, &result.handle);
  result.live = true;
  stop_watchdog();
  if (rc == DuckDBError) {
    if (timed_out) throw timeout_error();
    const char* err = duckdb_result_error(&result.handle);
    throw fail(err ? err : "execution failed");
  }
  QueryResult out = db::read_result(result.handle, limits.max_rows);
  if (elapsed_seconds) {
    *elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

void PipelineFlags::validate() const {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
}

std::string_view to_string(AbstainReason reason) {
  switch (reason) {
    case AbstainReason::retries_exhausted: return "retries_exhausted";
    case AbstainReason::gateway: return "gateway";
    case AbstainReason::policy: return "policy";
  }
  return "retries_exhausted";
}

std::string build_demo_block(std::string_view question, const PipelineContext& ctx) {
  std::vector<demos::Demonstration> selected;
  const std::size_t turns = std::min(ctx.session.size(), kMaxSessionDemos);
  for (std::size_t i = 0; i < turns; ++i) {
    const SessionTurn& turn = ctx.session[ctx.session.size() - 1 - i];
    demos::Demonstration d;
    d.id = "session-" + std::to_string(ctx.session.size() - 1 - i);
    d.question = turn.question;
    d.sql = turn.sql;
    d.source = demos::DemoSource::session;
    try {
      const auto ids = postprocess::collect_identifiers(turn.sql);
      d.relevant_tables.assign(ids.tables.begin(), ids.tables.end());
    } catch (const ParseError&) {
      // the engine accepted it; the table list is only a hint
    }
    selected.push_back(std::move(d));
  }
  if (ctx.demos && ctx.flags.k_demos > 0) {
    for (auto& scored : ctx.demos->retrieve_top_k(question, ctx.flags.k_demos)) selected.push_back(std::move(scored.demo));
  }
  return demos::render_demo_block(selected);
}

PipelineOutcome run_pipeline(std::string_view question, PipelineContext& ctx) {
  ctx.flags.validate();
  const auto start = std::chrono::steady_clock::now();
  PipelineOutcome outcome;
  outcome.question = std::string(question);

  const std::string schema_block = ctx.flags.include_schema ? schema::render_schema_block(ctx.catalog) : std::string();
  prompt::PromptBundle bundle = prompt::build_sql_prompt(schema_block, build_demo_block(question, ctx), question,
                                                         {ctx.flags.include_schema, ctx.flags.include_cot});
  std::string last_sql;
  std::string last_error;

  for (int i = 0; i < ctx.flags.max_attempts; ++i) {
    if (i > 0) bundle = prompt::build_retry_prompt(bundle, last_sql, last_error);
    Attempt a;
    a.prompt_hash = llm::sha256_hex(bundle.text);
    a.prompt_kind = std::string(prompt::to_string(bundle.kind));

    llm::CompletionRecord rec;
    try {
      rec = ctx.gateway.complete(bundle);
    } catch (const GatewayError& e) {
      a.error_kind = dynamic_cast<const CassetteMissError*>(&e) ? "cassette_miss" : "gateway";
      a.execution_error = e.what();
      outcome.attempts.push_back(std::move(a));
      outcome.abstained = AbstainReason::gateway;
      break;
    }
    a.completion = rec.completion;
    a.latency_seconds = rec.latency_seconds;

    std::string sql;
    try {
      sql = postprocess::extract_sql(rec.completion);
    } catch (const ExtractionError& e) {
      a.error_kind = "extraction";
      a.execution_error = e.what();
      last_sql = "(no SQL block found)";
      last_error = e.what();
      outcome.attempts.push_back(std::move(a));
      continue;
    }
    a.extracted_sql = sql;
    last_sql = sql;

    if (ctx.flags.guardrail) {
      auto report = postprocess::guardrail_check(sql, ctx.catalog);
      const bool ok = report.passed;
      last_error = report.error_message();
      a.guardrail = std::move(report);
      if (!ok) {
        a.error_kind = "guardrail";
        a.execution_error = last_error;
        outcome.attempts.push_back(std::move(a));
        continue;
      }
    }

    auto try_execute = [&](const std::string& text) {
      QueryResult r = execute_sql(text, ctx.connection, ctx.limits, &ctx.catalog);
      a.executed_sql = text;
      outcome.final_sql = text;
      outcome.result = std::move(r);
    };
    try {
      try_execute(sql);
    } catch (const PolicyError& e) {
      a.error_kind = "policy";
      a.execution_error = e.what();
      outcome.attempts.push_back(std::move(a));
      outcome.abstained = AbstainReason::policy;
      break;
    } catch (const QueryTimeoutError& e) {
      a.error_kind = "timeout";
      a.execution_error = e.what();
      last_error = e.what();
    } catch (const ExecutionError& e) {
      a.error_kind = "execution";
      a.execution_error = e.what();
      last_error = e.what();
      if (ctx.flags.repair) {
        try {
          const std::string repaired = sql::transpile(sql);
          if (repaired != sql) {
            try_execute(repaired);
            a.repaired = true;
            a.error_kind.clear();
            a.execution_error.reset();
          }
        } catch (const TranspileError&) {
        } catch (const PolicyError&) {
        } catch (const ExecutionError&) {
        }
      }
    }
    outcome.attempts.push_back(std::move(a));
    if (outcome.result) break;
  }
  if (!outcome.result && !outcome.abstained) outcome.abstained = AbstainReason::retries_exhausted;
  outcome.total_latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

nlohmann::json to_json(const Attempt& a) {
  nlohmann::json j = {{"prompt_hash", a.prompt_hash},
                      {"prompt_kind", a.prompt_kind},
                      {"latency_seconds", a.latency_seconds},
                      {"repaired", a.repaired}};
  j["extracted_sql"] = a.extracted_sql ? nlohmann::json(*a.extracted_sql) : nlohmann::json(nullptr);
  j["error"] = a.execution_error ? nlohmann::json(*a.execution_error) : nlohmann::json(nullptr);
  j["error_kind"] = a.error_kind.empty() ? nlohmann::json(nullptr) : nlohmann::json(a.error_kind);
  if (a.guardrail) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : a.guardrail->violations) v.push_back({{"identifier", x.identifier}, {"reason", x.reason}});
    j["guardrail"] = {{"passed", a.guardrail->passed}, {"violations", v}};
  } else {
    j["guardrail"] = nullptr;
  }
  return j;
}

}  // namespace nlsql::exec
