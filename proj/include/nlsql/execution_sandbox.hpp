#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlsql/database.hpp"
#include "nlsql/demo_store.hpp"
#include "nlsql/llm_gateway.hpp"
#include "nlsql/query_result.hpp"
#include "nlsql/schema_catalog.hpp"
#include "nlsql/sql_postprocess.hpp"

namespace nlsql::exec {

struct ExecutionLimits {
  std::chrono::milliseconds timeout{30000};
  std::size_t max_rows = 10000;
};

// Rewrites `quoted` identifiers to "quoted" ones outside string literals and comments.
std::string normalize_identifier_quotes(std::string_view sql);

// Replaces quoted segments of an engine message that occur neither in the SQL text nor among
// the catalog's table and column names, so cell values never travel in error text.
std::string redact_engine_message(std::string_view message, std::string_view sql,
                                  const schema::SchemaCatalog* catalog);

// Runs one read-only statement. Throws PolicyError (not a single SELECT), QueryTimeoutError,
// or ExecutionError carrying the (redacted) engine message.
QueryResult execute_sql(std::string_view sql, db::Connection& connection, const ExecutionLimits& limits = {},
                        const schema::SchemaCatalog* catalog = nullptr, double* elapsed_seconds = nullptr);

struct PipelineFlags {
  std::size_t k_demos = 2;
  bool include_schema = true;
  bool include_cot = true;
  int max_attempts = 2;
  bool guardrail = true;
  bool repair = false;  // retry a failed execution once through the dialect transpiler

  void validate() const;  // throws std::invalid_argument
};

struct Attempt {
  std::string prompt_hash;
  std::string prompt_kind;
  std::string completion;
  std::optional<std::string> extracted_sql;
  std::optional<postprocess::GuardrailReport> guardrail;
  std::optional<std::string> execution_error;
  std::string error_kind;  // extraction | guardrail | execution | timeout | policy | gateway | cassette_miss; empty on success
  std::string executed_sql;
  bool repaired = false;
  double latency_seconds = 0.0;  // model latency
};

enum class AbstainReason { retries_exhausted, gateway, policy };
std::string_view to_string(AbstainReason reason);

struct PipelineOutcome {
  std::string question;
  std::vector<Attempt> attempts;
  std::optional<QueryResult> result;
  std::optional<AbstainReason> abstained;
  std::string final_sql;
  double total_latency_seconds = 0.0;

  bool answered() const { return result.has_value(); }
};

struct SessionTurn {
  std::string question;
  std::string sql;
};

struct PipelineContext {
  const schema::SchemaCatalog& catalog;
  const demos::DemoStore* demos = nullptr;
  llm::Gateway& gateway;
  db::Connection& connection;
  PipelineFlags flags{};
  ExecutionLimits limits{};
  std::span<const SessionTurn> session{};  // oldest first
};

inline constexpr std::size_t kMaxSessionDemos = 3;

// The few-shot block: session turns (most recent first, at most three) then retrieved demos.
std::string build_demo_block(std::string_view question, const PipelineContext& ctx);

// generate -> extract -> guardrail -> execute, retrying with the error appended.
// Gateway failures and policy violations abstain immediately; harness and audit errors propagate.
PipelineOutcome run_pipeline(std::string_view question, PipelineContext& ctx);

nlohmann::json to_json(const Attempt& attempt);

}  // namespace nlsql::exec
